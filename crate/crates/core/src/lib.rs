//! Deterministic dual-arm teleoperation simulator built around a Cartesian
//! impedance controller.
//!
//! The crate is layered bottom-up:
//!
//! - [`geometry`]: poses, twists, wrenches and the rotation-vector map.
//! - [`impedance`]: the spring-damper wrench law and the Jacobian-transpose
//!   torque map for serial chains.
//! - [`clutch`]: anchored hand-to-target mapping with a clutch button.
//! - [`tasks`]: box/target definitions, the completion predicate with
//!   180° yaw symmetry, scenario generation and target sequencing.
//! - [`sim`]: fixed-step rigid-body world with penalty contacts.
//! - [`harness`]: session stepping, scripted operators, trial records, CSV.

pub mod clutch;
pub mod geometry;
pub mod harness;
pub mod impedance;
pub mod sim;
pub mod tasks;

pub use geometry::{Pose, Twist, Wrench};

//! Command-line front end and real-time gateway for the teleoperation
//! simulator in `teleop-core`.

pub mod gateway;

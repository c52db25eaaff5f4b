//! Cartesian impedance control.
//!
//! The controller emulates a spring-damper between the current end-effector
//! state and a target state:
//!
//! ```text
//! F = K [p_t - p; φ(Rᵀ R_t)] + D [v_t - v; ω_t - ω]
//! ```
//!
//! The rotational error `φ(Rᵀ R_t)` is a rotation vector expressed in the
//! current end-effector frame. [`impedance_wrench`] evaluates the law
//! literally, so the rotational rows of both the input twists and the output
//! torque live in that frame; callers that work in world coordinates rotate
//! in and out (see `sim::World::step`).
//!
//! For arms, the wrench maps to joint torques via `τ = Jᵀ F` with the
//! geometric Jacobian of a [`SerialChain`].

use crate::geometry::{self, MotionState, Pose, Vec3, Wrench};
use nalgebra::{DMatrix, DVector, Matrix6, Unit, UnitQuaternion, Vector6};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ImpedanceError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("stiffness matrix must be diagonal")]
    StiffnessNotDiagonal,
    #[error("stiffness entry {index} is negative ({value})")]
    NegativeStiffness { index: usize, value: f64 },
    #[error("damping matrix must be symmetric")]
    DampingNotSymmetric,
    #[error("damping matrix is not positive semidefinite (min eigenvalue {0})")]
    DampingNotPsd(f64),
    #[error("invalid {what}: {value}")]
    InvalidParameter { what: &'static str, value: f64 },
    #[error("serial chain needs at least one joint")]
    EmptyChain,
    #[error("joint {0} axis is not unit length")]
    AxisNotUnit(usize),
    #[error("expected {expected} joint values, got {got}")]
    JointCountMismatch { expected: usize, got: usize },
    #[error("jacobian must have 6 rows, got {0}")]
    JacobianShape(usize),
}

/// Stiffness `K` (diagonal) and damping `D` (symmetric PSD) of the
/// spring-damper. Rows 0..3 are translational, 3..6 rotational.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceGains {
    stiffness: Matrix6<f64>,
    damping: Matrix6<f64>,
}

impl ImpedanceGains {
    pub fn new(stiffness: Matrix6<f64>, damping: Matrix6<f64>) -> Result<Self, ImpedanceError> {
        if !stiffness.iter().chain(damping.iter()).all(|v| v.is_finite()) {
            return Err(ImpedanceError::NonFinite("gains"));
        }
        for r in 0..6 {
            for c in 0..6 {
                if r != c && stiffness[(r, c)] != 0.0 {
                    return Err(ImpedanceError::StiffnessNotDiagonal);
                }
            }
            if stiffness[(r, r)] < 0.0 {
                return Err(ImpedanceError::NegativeStiffness {
                    index: r,
                    value: stiffness[(r, r)],
                });
            }
        }
        let scale = damping.amax().max(1.0);
        if (damping - damping.transpose()).amax() > 1e-12 * scale {
            return Err(ImpedanceError::DampingNotSymmetric);
        }
        let min_eig = damping.symmetric_eigenvalues().min();
        if min_eig < -1e-12 * scale {
            return Err(ImpedanceError::DampingNotPsd(min_eig));
        }
        Ok(Self { stiffness, damping })
    }

    /// Diagonal gains with `D_ii = 2ζ√(K_ii M_ii)`, where `M` is the
    /// (virtual) mass for translational axes and inertia for rotational ones.
    pub fn critically_damped(
        translational: f64,
        rotational: f64,
        mass: f64,
        inertia: f64,
        damping_ratio: f64,
    ) -> Result<Self, ImpedanceError> {
        for (what, value) in [
            ("translational stiffness", translational),
            ("rotational stiffness", rotational),
            ("damping ratio", damping_ratio),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ImpedanceError::InvalidParameter { what, value });
            }
        }
        for (what, value) in [("mass", mass), ("inertia", inertia)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ImpedanceError::InvalidParameter { what, value });
            }
        }
        let dt = 2.0 * damping_ratio * (translational * mass).sqrt();
        let dr = 2.0 * damping_ratio * (rotational * inertia).sqrt();
        let k = Vector6::new(
            translational,
            translational,
            translational,
            rotational,
            rotational,
            rotational,
        );
        let d = Vector6::new(dt, dt, dt, dr, dr, dr);
        Self::new(Matrix6::from_diagonal(&k), Matrix6::from_diagonal(&d))
    }

    pub fn stiffness(&self) -> &Matrix6<f64> {
        &self.stiffness
    }

    pub fn damping(&self) -> &Matrix6<f64> {
        &self.damping
    }

    pub fn translational_stiffness(&self) -> Vec3 {
        Vec3::new(self.stiffness[(0, 0)], self.stiffness[(1, 1)], self.stiffness[(2, 2)])
    }

    pub fn rotational_stiffness(&self) -> Vec3 {
        Vec3::new(self.stiffness[(3, 3)], self.stiffness[(4, 4)], self.stiffness[(5, 5)])
    }
}

/// Controller settings as they appear in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpedanceConfig {
    /// N/m
    pub translational_stiffness: f64,
    /// N·m/rad
    pub rotational_stiffness: f64,
    pub damping_ratio: f64,
}

impl Default for ImpedanceConfig {
    fn default() -> Self {
        Self {
            translational_stiffness: 200.0,
            rotational_stiffness: 10.0,
            damping_ratio: 1.0,
        }
    }
}

impl ImpedanceConfig {
    pub fn gains(&self, mass: f64, inertia: f64) -> Result<ImpedanceGains, ImpedanceError> {
        ImpedanceGains::critically_damped(
            self.translational_stiffness,
            self.rotational_stiffness,
            mass,
            inertia,
            self.damping_ratio,
        )
    }
}

/// Pose error `[p_t - p; φ(Rᵀ R_t)]`.
pub fn pose_error(current: &Pose, target: &Pose) -> Vector6<f64> {
    let dp = target.position - current.position;
    // q⁻¹q rounds to a rotation of ~1e-17 rad; keep a zero error exactly zero.
    let dr = if current.rotation == target.rotation {
        Vec3::zeros()
    } else {
        geometry::log(&(current.rotation.inverse() * target.rotation))
    };
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

/// Velocity error `[v_t - v; ω_t - ω]`.
pub fn velocity_error(current: &MotionState, target: &MotionState) -> Vector6<f64> {
    let dv = target.twist.linear - current.twist.linear;
    let dw = target.twist.angular - current.twist.angular;
    Vector6::new(dv.x, dv.y, dv.z, dw.x, dw.y, dw.z)
}

/// The impedance wrench. Non-finite inputs are rejected; no saturation is
/// applied here.
pub fn impedance_wrench(
    current: &MotionState,
    target: &MotionState,
    gains: &ImpedanceGains,
) -> Result<Wrench, ImpedanceError> {
    if !current.is_finite() {
        return Err(ImpedanceError::NonFinite("current state"));
    }
    if !target.is_finite() {
        return Err(ImpedanceError::NonFinite("target state"));
    }
    let f = gains.stiffness * pose_error(&current.pose, &target.pose)
        + gains.damping * velocity_error(current, target);
    Ok(Wrench {
        force: f.fixed_rows::<3>(0).into_owned(),
        torque: f.fixed_rows::<3>(3).into_owned(),
    })
}

/// One revolute joint: a fixed transform from the previous frame followed by
/// a rotation about `axis` (expressed in the joint frame).
#[derive(Debug, Clone, PartialEq)]
pub struct RevoluteJoint {
    pub origin: Pose,
    pub axis: Unit<Vec3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SerialChain {
    joints: Vec<RevoluteJoint>,
    tool: Pose,
}

impl SerialChain {
    /// `joints` are `(origin, axis)` pairs; `tool` is the end-effector frame
    /// relative to the last joint.
    pub fn new(joints: Vec<(Pose, Vec3)>, tool: Pose) -> Result<Self, ImpedanceError> {
        if joints.is_empty() {
            return Err(ImpedanceError::EmptyChain);
        }
        let joints = joints
            .into_iter()
            .enumerate()
            .map(|(i, (origin, axis))| {
                if !origin.is_finite() {
                    return Err(ImpedanceError::NonFinite("joint origin"));
                }
                if (axis.norm() - 1.0).abs() > 1e-9 {
                    return Err(ImpedanceError::AxisNotUnit(i));
                }
                Ok(RevoluteJoint {
                    origin,
                    axis: Unit::new_unchecked(axis),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if !tool.is_finite() {
            return Err(ImpedanceError::NonFinite("tool transform"));
        }
        Ok(Self { joints, tool })
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[RevoluteJoint] {
        &self.joints
    }

    fn check_q(&self, q: &[f64]) -> Result<(), ImpedanceError> {
        if q.len() != self.joints.len() {
            return Err(ImpedanceError::JointCountMismatch {
                expected: self.joints.len(),
                got: q.len(),
            });
        }
        if !q.iter().all(|v| v.is_finite()) {
            return Err(ImpedanceError::NonFinite("joint angles"));
        }
        Ok(())
    }

    /// World frames of each joint (after its fixed origin, before its
    /// rotation) and the end-effector pose.
    fn frames(&self, q: &[f64]) -> (Vec<Pose>, Pose) {
        let mut frame = Pose::identity();
        let mut joint_frames = Vec::with_capacity(self.joints.len());
        for (joint, &angle) in self.joints.iter().zip(q) {
            frame = frame.compose(&joint.origin);
            joint_frames.push(frame);
            frame = frame.compose(&Pose::from_parts(
                Vec3::zeros(),
                UnitQuaternion::from_axis_angle(&joint.axis, angle),
            ));
        }
        (joint_frames, frame.compose(&self.tool))
    }

    pub fn forward_kinematics(&self, q: &[f64]) -> Result<Pose, ImpedanceError> {
        self.check_q(q)?;
        Ok(self.frames(q).1)
    }

    /// Geometric Jacobian (6×n) in world coordinates: column i is
    /// `[z_i × (p_ee − p_i); z_i]`.
    pub fn jacobian(&self, q: &[f64]) -> Result<DMatrix<f64>, ImpedanceError> {
        self.check_q(q)?;
        let (joint_frames, ee) = self.frames(q);
        let mut j = DMatrix::zeros(6, self.joints.len());
        for (i, (frame, joint)) in joint_frames.iter().zip(&self.joints).enumerate() {
            let z = frame.rotation * joint.axis.into_inner();
            let lin = z.cross(&(ee.position - frame.position));
            for r in 0..3 {
                j[(r, i)] = lin[r];
                j[(r + 3, i)] = z[r];
            }
        }
        Ok(j)
    }
}

/// `τ = Jᵀ F` with `F = [force; torque]`.
pub fn joint_torques(jacobian: &DMatrix<f64>, wrench: &Wrench) -> Result<DVector<f64>, ImpedanceError> {
    if jacobian.nrows() != 6 {
        return Err(ImpedanceError::JacobianShape(jacobian.nrows()));
    }
    let f = DVector::from_iterator(6, wrench.force.iter().chain(wrench.torque.iter()).copied());
    Ok(jacobian.transpose() * f)
}

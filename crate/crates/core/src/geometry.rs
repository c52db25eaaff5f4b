//! Pose algebra on SE(3).
//!
//! Orientations are stored as unit quaternions; rotation matrices are only
//! materialized where a formula needs them. The rotation-vector map
//! ([`rotation_vector`]) works on the matrix form so that it can be checked
//! against a quaternion logarithm.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Neg, Sub};

pub type Vec3 = Vector3<f64>;
pub type Rotation = UnitQuaternion<f64>;

/// Below this angle the rotation-vector and exponential maps switch to their
/// second-order series.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Rotations whose angle is within this distance of π have an ambiguous axis
/// sign and are reported with [`RotationVector::near_pi`] set.
pub const NEAR_PI: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("degenerate quaternion (norm {0})")]
    DegenerateQuaternion(f64),
}

pub(crate) fn ensure_finite(v: &Vec3, what: &'static str) -> Result<(), GeometryError> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(GeometryError::NonFinite(what))
    }
}

/// Position and orientation of a frame in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    pub position: Vec3,
    pub rotation: Rotation,
}

/// Text form of a pose: position in meters and a `[w, x, y, z]` quaternion.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct PoseRepr {
    position: [f64; 3],
    #[serde(default = "identity_wxyz")]
    orientation: [f64; 4],
}

fn identity_wxyz() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl TryFrom<PoseRepr> for Pose {
    type Error = GeometryError;

    fn try_from(r: PoseRepr) -> Result<Self, Self::Error> {
        let [w, x, y, z] = r.orientation;
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || n < 1e-9 {
            return Err(GeometryError::DegenerateQuaternion(n));
        }
        Pose::new(Vec3::from(r.position), UnitQuaternion::new_normalize(q))
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        let q = p.rotation.quaternion();
        PoseRepr {
            position: [p.position.x, p.position.y, p.position.z],
            orientation: [q.w, q.i, q.j, q.k],
        }
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(position: Vec3, rotation: Rotation) -> Result<Self, GeometryError> {
        ensure_finite(&position, "pose position")?;
        if !rotation.coords.iter().all(|c| c.is_finite()) {
            return Err(GeometryError::NonFinite("pose rotation"));
        }
        Ok(Self { position, rotation })
    }

    pub fn identity() -> Self {
        Self {
            position: Vec3::zeros(),
            rotation: Rotation::identity(),
        }
    }

    pub fn from_translation(position: Vec3) -> Self {
        Self {
            position,
            rotation: Rotation::identity(),
        }
    }

    pub fn from_parts(position: Vec3, rotation: Rotation) -> Self {
        Self { position, rotation }
    }

    /// `self ∘ other`: `other` expressed in `self`'s frame, mapped to world.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.position + self.rotation * other.position,
            rotation: self.rotation * other.rotation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            position: -(inv * self.position),
            rotation: inv,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.position + self.rotation * p
    }

    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.inverse() * (p - self.position)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|c| c.is_finite())
            && self.rotation.coords.iter().all(|c| c.is_finite())
    }
}

/// Linear and angular velocity, both in world coordinates unless a caller
/// documents otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub linear: Vec3,
    pub angular: Vec3,
}

impl Twist {
    pub fn new(linear: Vec3, angular: Vec3) -> Result<Self, GeometryError> {
        ensure_finite(&linear, "twist linear")?;
        ensure_finite(&angular, "twist angular")?;
        Ok(Self { linear, angular })
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().chain(self.angular.iter()).all(|c| c.is_finite())
    }
}

/// Axis-aligned box in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        Vec3::from_fn(|i, _| p[i].clamp(self.min[i], self.max[i]))
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|i| self.min[i].is_finite() && self.max[i].is_finite() && self.min[i] <= self.max[i])
    }
}

/// Pose together with its velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MotionState {
    pub pose: Pose,
    pub twist: Twist,
}

impl MotionState {
    pub fn new(pose: Pose, twist: Twist) -> Self {
        Self { pose, twist }
    }

    pub fn at_rest(pose: Pose) -> Self {
        Self {
            pose,
            twist: Twist::zero(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pose.is_finite() && self.twist.is_finite()
    }
}

/// Force and torque acting on a body.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
}

impl Wrench {
    pub fn new(force: Vec3, torque: Vec3) -> Result<Self, GeometryError> {
        ensure_finite(&force, "wrench force")?;
        ensure_finite(&torque, "wrench torque")?;
        Ok(Self { force, torque })
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Wrench from a force applied at `point`, with the torque taken about
    /// `reference`.
    pub fn from_force_at(force: Vec3, point: &Vec3, reference: &Vec3) -> Self {
        Self {
            force,
            torque: (point - reference).cross(&force),
        }
    }

    /// Same physical wrench with its torque re-expressed about `new_ref`
    /// (currently taken about `old_ref`).
    pub fn shifted(&self, old_ref: &Vec3, new_ref: &Vec3) -> Self {
        Self {
            force: self.force,
            torque: self.torque + (old_ref - new_ref).cross(&self.force),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.torque.iter()).all(|c| c.is_finite())
    }
}

impl Add for Wrench {
    type Output = Wrench;
    fn add(self, rhs: Wrench) -> Wrench {
        Wrench {
            force: self.force + rhs.force,
            torque: self.torque + rhs.torque,
        }
    }
}

impl AddAssign for Wrench {
    fn add_assign(&mut self, rhs: Wrench) {
        self.force += rhs.force;
        self.torque += rhs.torque;
    }
}

impl Sub for Wrench {
    type Output = Wrench;
    fn sub(self, rhs: Wrench) -> Wrench {
        Wrench {
            force: self.force - rhs.force,
            torque: self.torque - rhs.torque,
        }
    }
}

impl Neg for Wrench {
    type Output = Wrench;
    fn neg(self) -> Wrench {
        Wrench {
            force: -self.force,
            torque: -self.torque,
        }
    }
}

/// Axis·angle vector of a rotation, angle in `[0, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationVector {
    pub vector: Vec3,
    /// The angle is within [`NEAR_PI`] of π. The axis sign is then not
    /// determined by the rotation; the returned axis is the canonical one
    /// whose first non-zero component is positive.
    pub near_pi: bool,
}

impl RotationVector {
    pub fn angle(&self) -> f64 {
        self.vector.norm()
    }
}

/// Rotation vector (axis·angle) of a proper rotation matrix.
pub fn rotation_vector(r: &Rotation3<f64>) -> RotationVector {
    let m = r.matrix();
    let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    // Skew part: sin(θ)·axis.
    let skew = Vec3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    ) * 0.5;
    let sin = skew.norm();
    let angle = sin.atan2(cos);

    if angle < SMALL_ANGLE {
        // θ / sin θ ≈ 1 + θ²/6
        return RotationVector {
            vector: skew * (1.0 + sin * sin / 6.0),
            near_pi: false,
        };
    }
    if cos > -0.5 {
        return RotationVector {
            vector: skew * (angle / sin),
            near_pi: false,
        };
    }

    // Large angles: recover the axis from the symmetric part,
    // (R + Rᵀ)/2 − cos θ·I = (1 − cos θ)·a·aᵀ.
    let sym = (m + m.transpose()) * 0.5 - Matrix3::identity() * cos;
    let one_minus_cos = 1.0 - cos;
    let i = (0..3)
        .max_by(|&a, &b| sym[(a, a)].total_cmp(&sym[(b, b)]))
        .unwrap_or(0);
    let ai = (sym[(i, i)] / one_minus_cos).max(0.0).sqrt();
    let mut axis = Vec3::zeros();
    for j in 0..3 {
        axis[j] = if j == i {
            ai
        } else {
            sym[(i, j)] / (one_minus_cos * ai)
        };
    }
    axis.normalize_mut();

    let near_pi = PI - angle < NEAR_PI;
    if near_pi {
        canonicalize_sign(&mut axis);
    } else if axis.dot(&skew) < 0.0 {
        axis = -axis;
    }
    RotationVector {
        vector: axis * angle,
        near_pi,
    }
}

fn canonicalize_sign(axis: &mut Vec3) {
    const ZERO: f64 = 1e-12;
    if let Some(&lead) = axis.iter().find(|c| c.abs() > ZERO) {
        if lead < 0.0 {
            *axis = -*axis;
        }
    }
}

/// Rotation vector of a unit quaternion (via its matrix).
pub fn log(q: &Rotation) -> Vec3 {
    rotation_vector(&q.to_rotation_matrix()).vector
}

/// Exponential map: rotation of `|v|` radians about `v/|v|`.
pub fn exp(v: &Vec3) -> Rotation {
    let theta = v.norm();
    let (w, s) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 8.0, 0.5 - t2 / 48.0)
    } else {
        let half = 0.5 * theta;
        (half.cos(), half.sin() / theta)
    };
    UnitQuaternion::new_normalize(Quaternion::new(w, v.x * s, v.y * s, v.z * s))
}

/// Angle of the relative rotation between `a` and `b`.
pub fn geodesic_angle(a: &Rotation, b: &Rotation) -> f64 {
    log(&(a.inverse() * b)).norm()
}

/// Rotation about the world vertical axis.
pub fn yaw(angle: f64) -> Rotation {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle)
}

/// Yaw angle of the rotated body x-axis projected on the horizontal plane.
pub fn heading(q: &Rotation) -> f64 {
    let x = q * Vec3::x();
    x.y.atan2(x.x)
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &Vec3, b: &Vec3, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    /// Quaternion logarithm, written independently of `rotation_vector`.
    fn quat_log_oracle(q: &Rotation) -> Vec3 {
        let mut w = q.w;
        let mut v = Vec3::new(q.i, q.j, q.k);
        if w < 0.0 {
            w = -w;
            v = -v;
        }
        let s = v.norm();
        if s == 0.0 {
            return Vec3::zeros();
        }
        v * (2.0 * s.atan2(w) / s)
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
        loop {
            let q = Quaternion::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let n = q.norm();
            if n > 0.1 && n <= 1.0 {
                return UnitQuaternion::new_normalize(q);
            }
        }
    }

    #[test]
    fn identity_has_zero_rotation_vector() {
        let rv = rotation_vector(&Rotation3::identity());
        assert_eq!(rv.vector, Vec3::zeros());
        assert!(!rv.near_pi);
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = Rotation3::from_axis_angle(&Vector3::z_axis(), PI / 2.0);
        let v = rotation_vector(&r).vector;
        assert!(close(&v, &Vec3::new(0.0, 0.0, PI / 2.0), 1e-15), "{v}");
    }

    #[test]
    fn matches_quaternion_log_on_random_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let q = random_rotation(&mut rng);
            let got = log(&q);
            let want = quat_log_oracle(&q);
            assert!(close(&got, &want, 1e-9), "{got} vs {want}");
        }
    }

    #[test]
    fn large_angle_branch_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let axis = nalgebra::Unit::new_normalize(Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ));
            let angle = rng.gen_range(2.0..(PI - 2e-6));
            let q = UnitQuaternion::from_axis_angle(&axis, angle);
            assert!(close(&log(&q), &quat_log_oracle(&q), 1e-9));
        }
    }

    #[test]
    fn near_pi_is_flagged_and_canonical() {
        let axis = nalgebra::Unit::new_normalize(Vec3::new(-0.3, 0.5, 0.2));
        let r = Rotation3::from_axis_angle(&axis, PI);
        let rv = rotation_vector(&r);
        assert!(rv.near_pi);
        assert!(rv.vector.x > 0.0);
        assert!((rv.angle() - PI).abs() < 1e-12);
        let flipped = Rotation3::from_axis_angle(&-axis, PI);
        assert!(close(&rotation_vector(&flipped).vector, &rv.vector, 1e-9));
        // Leading zero component: the next component decides the sign.
        let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vec3::new(0.0, -1.0, 1.0)), PI);
        let rv = rotation_vector(&r);
        assert!(rv.vector.x.abs() < 1e-12 && rv.vector.y > 0.0);
    }

    #[test]
    fn small_angles_use_series() {
        let v = Vec3::new(3e-10, -2e-10, 1e-10);
        let q = exp(&v);
        assert!(close(&log(&q), &v, 1e-20));
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let a = Pose::from_parts(Vec3::new(0.3, -1.0, 2.0), yaw(0.7) * exp(&Vec3::new(0.1, 0.2, 0.0)));
        let e = a.compose(&a.inverse());
        assert!(e.position.norm() < 1e-15);
        assert!(geodesic_angle(&e.rotation, &Rotation::identity()) < 1e-15);
        let e = a.inverse().compose(&a);
        assert!(e.position.norm() < 1e-15);
    }

    #[test]
    fn geodesic_angle_examples() {
        let r = exp(&Vec3::new(0.2, -0.1, 1.3));
        assert_eq!(geodesic_angle(&r, &r), 0.0);
        assert!((geodesic_angle(&Rotation::identity(), &yaw(0.4)) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn pose_text_form_rejects_zero_quaternion() {
        let repr = PoseRepr {
            position: [0.0; 3],
            orientation: [0.0; 4],
        };
        assert!(Pose::try_from(repr).is_err());
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        assert!(Pose::new(Vec3::new(f64::NAN, 0.0, 0.0), Rotation::identity()).is_err());
        assert!(Twist::new(Vec3::zeros(), Vec3::new(0.0, f64::INFINITY, 0.0)).is_err());
        assert!(Wrench::new(Vec3::new(0.0, 0.0, f64::NAN), Vec3::zeros()).is_err());
    }

    #[test]
    fn wrap_and_heading() {
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(wrap_angle(PI), PI);
        assert!((heading(&yaw(1.1)) - 1.1).abs() < 1e-15);
    }
}

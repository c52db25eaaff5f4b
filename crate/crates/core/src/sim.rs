//! Fixed-step rigid-body world: one box, a table, and two floating
//! end effectors pulled toward their targets by impedance wrenches.
//!
//! Contacts are penalty springs evaluated at sample points (nine on each
//! effector disk, eight box corners). Friction is Coulomb-capped: each
//! sample point carries a tangential stick spring plus a regularized viscous
//! term, and the sum is limited to `mu · N`.

use crate::geometry::{self, MotionState, Pose, Rotation, Twist, Vec3, Wrench};
use crate::impedance::{self, ImpedanceConfig, ImpedanceError, ImpedanceGains};
use crate::tasks::BoxSpec;
use nalgebra::{Matrix3, UnitQuaternion};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

pub const GRAVITY: f64 = 9.81;

/// Sample points on an effector disk: center plus eight on the rim.
pub const DISK_SAMPLES: usize = 9;
/// Corners of a cuboid.
pub const CUBOID_CORNERS: usize = 8;
/// Corners on one cuboid face; each corner carries this share of the face
/// stiffness.
const CORNERS_PER_FACE: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("non-finite {what} at tick {tick}\n{dump}")]
    NonFinite {
        what: &'static str,
        tick: u64,
        dump: String,
    },
    #[error("unsupported contact pair {0} / {1}")]
    UnsupportedPair(&'static str, &'static str),
    #[error("invalid {what}: {value}")]
    InvalidParameter { what: &'static str, value: f64 },
    #[error(transparent)]
    Impedance(#[from] ImpedanceError),
}

fn positive(what: &'static str, value: f64) -> Result<(), SimError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(SimError::InvalidParameter { what, value })
    }
}

fn non_negative(what: &'static str, value: f64) -> Result<(), SimError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(SimError::InvalidParameter { what, value })
    }
}

/// Penalty contact parameters. Stiffness and damping are per contacting
/// face: a flat face resting on a surface sees `k_n` in total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactParams {
    /// N/m
    pub k_n: f64,
    /// N·s/m
    pub d_n: f64,
    pub mu: f64,
    /// Slip speed (m/s) below which friction is viscous rather than
    /// saturated.
    pub slip_epsilon: f64,
    /// Tangential stick-spring stiffness as a fraction of `k_n`.
    pub stick_ratio: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            k_n: 10_000.0,
            d_n: 50.0,
            mu: 0.8,
            slip_epsilon: 0.05,
            stick_ratio: 1.0,
        }
    }
}

impl ContactParams {
    pub fn validate(&self) -> Result<(), SimError> {
        positive("contact stiffness", self.k_n)?;
        non_negative("contact damping", self.d_n)?;
        non_negative("friction coefficient", self.mu)?;
        positive("slip epsilon", self.slip_epsilon)?;
        non_negative("stick ratio", self.stick_ratio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Flat disk in the body xy-plane; the contact face normal is body +z.
    Disk { radius: f64 },
    Cuboid { half_extents: Vec3 },
    /// Solid below the plane through the body origin with normal body +z.
    HalfSpace,
}

impl Shape {
    fn name(&self) -> &'static str {
        match self {
            Shape::Disk { .. } => "disk",
            Shape::Cuboid { .. } => "cuboid",
            Shape::HalfSpace => "half-space",
        }
    }
}

/// A shape at a pose, moving with a twist (world frame, about the pose
/// origin).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Collider {
    pub shape: Shape,
    pub state: MotionState,
}

impl Collider {
    fn point_velocity(&self, p: &Vec3) -> Vec3 {
        self.state.twist.linear + self.state.twist.angular.cross(&(p - self.state.pose.position))
    }

    /// World sample points and the share of face stiffness each carries.
    fn samples(&self) -> (Vec<Vec3>, f64) {
        let pose = &self.state.pose;
        match self.shape {
            Shape::Disk { radius } => {
                let mut pts = Vec::with_capacity(DISK_SAMPLES);
                pts.push(pose.position);
                for k in 0..DISK_SAMPLES - 1 {
                    let a = k as f64 * std::f64::consts::TAU / (DISK_SAMPLES - 1) as f64;
                    pts.push(pose.transform_point(&Vec3::new(radius * a.cos(), radius * a.sin(), 0.0)));
                }
                (pts, 1.0 / DISK_SAMPLES as f64)
            }
            Shape::Cuboid { half_extents: h } => {
                let pts = (0..CUBOID_CORNERS)
                    .map(|k| {
                        let s = |bit: usize| if k & (1 << bit) == 0 { -1.0 } else { 1.0 };
                        pose.transform_point(&Vec3::new(s(0) * h.x, s(1) * h.y, s(2) * h.z))
                    })
                    .collect();
                (pts, 1.0 / CORNERS_PER_FACE)
            }
            Shape::HalfSpace => (Vec::new(), 0.0),
        }
    }

    /// Penetration depth of `p` into this collider and the outward normal.
    fn penetration(&self, p: &Vec3) -> Option<(f64, Vec3)> {
        let pose = &self.state.pose;
        match self.shape {
            Shape::HalfSpace => {
                let n = pose.rotation * Vec3::z();
                let depth = n.dot(&(pose.position - p));
                (depth > 0.0).then_some((depth, n))
            }
            Shape::Cuboid { half_extents: h } => {
                let local = pose.inverse_transform_point(p);
                let mut best: Option<(f64, usize)> = None;
                for i in 0..3 {
                    let d = h[i] - local[i].abs();
                    if d <= 0.0 {
                        return None;
                    }
                    if best.map_or(true, |(bd, _)| d < bd) {
                        best = Some((d, i));
                    }
                }
                let (depth, axis) = best?;
                let mut n = Vec3::zeros();
                n[axis] = if local[axis] >= 0.0 { 1.0 } else { -1.0 };
                Some((depth, pose.rotation * n))
            }
            Shape::Disk { .. } => None,
        }
    }
}

/// Forces between two colliders for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactResult {
    /// Wrench on the first collider, torque about its pose origin.
    pub on_a: Wrench,
    /// Wrench on the second collider, torque about its pose origin.
    pub on_b: Wrench,
    /// Per-sample tangential stick-spring stretch after this step.
    pub memory: Vec<Vec3>,
    pub normal_force: f64,
    pub tangential_force: f64,
    /// Largest `|f_t| − mu·N` over the contact points (≤ 0 inside the cone).
    pub cone_excess: f64,
    pub points: usize,
}

impl ContactResult {
    fn empty(n: usize) -> Self {
        Self {
            on_a: Wrench::zero(),
            on_b: Wrench::zero(),
            memory: vec![Vec3::zeros(); n],
            normal_force: 0.0,
            tangential_force: 0.0,
            cone_excess: f64::NEG_INFINITY,
            points: 0,
        }
    }

    pub fn in_contact(&self) -> bool {
        self.points > 0
    }
}

/// Penalty contact between a point-sampled collider and a solid one.
///
/// Supported pairs (either order): disk–cuboid, disk–half-space,
/// cuboid–half-space. `memory` holds the stick-spring stretch per sample
/// point of the sampled collider from the previous step (empty = none).
pub fn contact_forces(
    a: &Collider,
    b: &Collider,
    params: &ContactParams,
    memory: &[Vec3],
    dt: f64,
) -> Result<ContactResult, SimError> {
    use Shape::*;
    let swap = match (a.shape, b.shape) {
        (Disk { .. }, Cuboid { .. }) | (Disk { .. }, HalfSpace) | (Cuboid { .. }, HalfSpace) => false,
        (Cuboid { .. }, Disk { .. }) | (HalfSpace, Disk { .. }) | (HalfSpace, Cuboid { .. }) => true,
        _ => return Err(SimError::UnsupportedPair(a.shape.name(), b.shape.name())),
    };
    let (sampled, solid) = if swap { (b, a) } else { (a, b) };
    let mut out = sampled_contact(sampled, solid, params, memory, dt);
    if swap {
        std::mem::swap(&mut out.on_a, &mut out.on_b);
    }
    Ok(out)
}

fn sampled_contact(
    sampled: &Collider,
    solid: &Collider,
    params: &ContactParams,
    memory: &[Vec3],
    dt: f64,
) -> ContactResult {
    let (points, share) = sampled.samples();
    let mut out = ContactResult::empty(points.len());
    let k = params.k_n * share;
    let d = params.d_n * share;
    let k_t = k * params.stick_ratio;
    let ca = sampled.state.pose.position;
    let cb = solid.state.pose.position;
    for (i, p) in points.iter().enumerate() {
        let Some((depth, n)) = solid.penetration(p) else {
            continue;
        };
        let v_rel = sampled.point_velocity(p) - solid.point_velocity(p);
        let depth_rate = -v_rel.dot(&n);
        let normal = (k * depth + d * depth_rate).max(0.0);

        let v_t = v_rel - n * v_rel.dot(&n);
        let prev = memory.get(i).copied().unwrap_or_else(Vec3::zeros);
        let mut stretch = prev - n * prev.dot(&n) + v_t * dt;
        let cap = params.mu * normal;
        let viscous = cap / params.slip_epsilon;
        let trial = -(stretch * k_t) - v_t * viscous;
        let trial_norm = trial.norm();
        let f_t = if trial_norm <= cap {
            trial
        } else {
            let f = trial * (cap / trial_norm);
            stretch = if k_t > 0.0 { -f / k_t } else { Vec3::zeros() };
            f
        };
        if normal == 0.0 {
            stretch = Vec3::zeros();
        }
        out.memory[i] = stretch;

        let f = n * normal + f_t;
        out.on_a += Wrench::from_force_at(f, p, &ca);
        out.on_b += Wrench::from_force_at(-f, p, &cb);
        out.normal_force += normal;
        out.tangential_force += f_t.norm();
        out.cone_excess = out.cone_excess.max(f_t.norm() - cap);
        out.points += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigidBody {
    pub pose: Pose,
    pub twist: Twist,
    /// kg
    pub mass: f64,
    /// Principal moments in the body frame, kg·m².
    pub inertia: Vec3,
}

impl RigidBody {
    pub fn new(pose: Pose, mass: f64, inertia: Vec3) -> Result<Self, SimError> {
        positive("body mass", mass)?;
        for m in inertia.iter() {
            positive("body inertia", *m)?;
        }
        Ok(Self {
            pose,
            twist: Twist::zero(),
            mass,
            inertia,
        })
    }

    pub fn motion(&self) -> MotionState {
        MotionState::new(self.pose, self.twist)
    }

    fn world_inertia(&self) -> Matrix3<f64> {
        let r = self.pose.rotation.to_rotation_matrix().into_inner();
        r * Matrix3::from_diagonal(&self.inertia) * r.transpose()
    }

    pub fn kinetic_energy(&self) -> f64 {
        let w = &self.twist.angular;
        0.5 * self.mass * self.twist.linear.norm_squared() + 0.5 * w.dot(&(self.world_inertia() * w))
    }

    /// Semi-implicit Euler: velocities first, then poses with the new
    /// velocities. Orientation is renormalized.
    fn integrate(&mut self, wrench: &Wrench, dt: f64) {
        let inertia = self.world_inertia();
        let w = self.twist.angular;
        let gyro = w.cross(&(inertia * w));
        let inv = inertia.try_inverse().unwrap_or_else(Matrix3::zeros);
        self.twist.linear += wrench.force * (dt / self.mass);
        self.twist.angular += inv * (wrench.torque - gyro) * dt;
        self.pose.position += self.twist.linear * dt;
        let q = geometry::exp(&(self.twist.angular * dt)) * self.pose.rotation;
        self.pose.rotation = UnitQuaternion::new_normalize(q.into_inner());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Effector {
    pub body: RigidBody,
    /// Radius of the flat contact face (body +z normal), meters.
    pub disk_radius: f64,
    pub target: MotionState,
    pub gains: ImpedanceGains,
    /// Saturated impedance wrench applied on the last step (world frame).
    pub command: Wrench,
}

impl Effector {
    pub fn collider(&self) -> Collider {
        Collider {
            shape: Shape::Disk {
                radius: self.disk_radius,
            },
            state: self.body.motion(),
        }
    }

    /// Impedance wrench in world coordinates (before saturation). The
    /// rotational rows are evaluated in the effector frame and rotated out.
    pub fn impedance_wrench(&self) -> Result<Wrench, ImpedanceError> {
        let r = self.body.pose.rotation;
        let to_body = |m: &MotionState| {
            MotionState::new(
                m.pose,
                Twist {
                    linear: m.twist.linear,
                    angular: r.inverse() * m.twist.angular,
                },
            )
        };
        let w = impedance::impedance_wrench(&to_body(&self.body.motion()), &to_body(&self.target), &self.gains)?;
        Ok(Wrench {
            force: w.force,
            torque: r * w.torque,
        })
    }

    /// Kinetic energy plus the spring potential `½ eᵀ K e`.
    pub fn energy(&self) -> f64 {
        let e = impedance::pose_error(&self.body.pose, &self.target.pose);
        self.body.kinetic_energy() + 0.5 * e.dot(&(self.gains.stiffness() * e))
    }

    pub fn offset(&self) -> Vec3 {
        self.target.pose.position - self.body.pose.position
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffectorConfig {
    /// Virtual mass, kg.
    pub mass: f64,
    /// Virtual inertia (all axes), kg·m².
    pub inertia: f64,
    pub disk_radius: f64,
    /// Per-axis force saturation, N.
    pub force_limit: f64,
}

impl Default for EffectorConfig {
    fn default() -> Self {
        Self {
            mass: 1.0,
            inertia: 0.01,
            disk_radius: 0.04,
            force_limit: 50.0,
        }
    }
}

/// World parameters as they appear in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub dt: f64,
    pub gravity: f64,
    pub table_height: f64,
    /// Distance between the two arm bases along the world y axis, meters.
    pub base_spacing: f64,
    /// Effector home positions: `[x, inset from the base, z]`.
    pub home_offset: [f64; 3],
    pub contact: ContactParams,
    pub effector: EffectorConfig,
    pub controller: ImpedanceConfig,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            dt: 0.001,
            gravity: GRAVITY,
            table_height: 0.0,
            base_spacing: 0.90,
            home_offset: [0.50, 0.15, 0.25],
            contact: ContactParams::default(),
            effector: EffectorConfig::default(),
            controller: ImpedanceConfig::default(),
        }
    }
}

impl WorldConfig {
    /// Home pose of an effector. Both faces point at each other across the
    /// workspace: the tool is mounted at a right angle to the approach so
    /// the disk normal is horizontal.
    pub fn home_pose(&self, side: usize) -> Pose {
        let sign = if side == 0 { 1.0 } else { -1.0 };
        let [x, inset, z] = self.home_offset;
        let y = sign * (0.5 * self.base_spacing - inset);
        // Body +z (disk normal) points toward the other effector.
        let r = UnitQuaternion::from_axis_angle(&Vec3::x_axis(), sign * FRAC_PI_2);
        Pose::from_parts(Vec3::new(x, y, z), r)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        positive("dt", self.dt)?;
        non_negative("gravity", self.gravity)?;
        if !self.table_height.is_finite() {
            return Err(SimError::InvalidParameter {
                what: "table height",
                value: self.table_height,
            });
        }
        positive("base spacing", self.base_spacing)?;
        positive("effector mass", self.effector.mass)?;
        positive("effector inertia", self.effector.inertia)?;
        positive("disk radius", self.effector.disk_radius)?;
        positive("force limit", self.effector.force_limit)?;
        self.contact.validate()
    }
}

/// Which contact pair a report entry belongs to.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContactReport {
    pub box_table: Option<ContactResult>,
    pub effector_box: [Option<ContactResult>; 2],
    pub effector_table: [Option<ContactResult>; 2],
}

impl ContactReport {
    pub fn box_on_table(&self) -> bool {
        self.box_table.as_ref().is_some_and(|c| c.in_contact())
    }

    pub fn effector_touches_box(&self, i: usize) -> bool {
        self.effector_box[i].as_ref().is_some_and(|c| c.in_contact())
    }

    pub fn all(&self) -> impl Iterator<Item = &ContactResult> {
        self.box_table
            .iter()
            .chain(self.effector_box.iter().flatten())
            .chain(self.effector_table.iter().flatten())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct FrictionMemory {
    box_table: Vec<Vec3>,
    effector_box: [Vec<Vec3>; 2],
    effector_table: [Vec<Vec3>; 2],
}

impl Default for FrictionMemory {
    fn default() -> Self {
        Self {
            box_table: vec![Vec3::zeros(); CUBOID_CORNERS],
            effector_box: std::array::from_fn(|_| vec![Vec3::zeros(); DISK_SAMPLES]),
            effector_table: std::array::from_fn(|_| vec![Vec3::zeros(); DISK_SAMPLES]),
        }
    }
}

/// The simulated world. [`World::step`] is a pure function of this state.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub box_body: RigidBody,
    pub box_half_extents: Vec3,
    pub effectors: [Effector; 2],
    /// Support surface: plane pose whose +z is the surface normal.
    pub table: Option<Pose>,
    pub contact: ContactParams,
    /// m/s², pointing down.
    pub gravity: f64,
    pub force_limit: f64,
    pub dt: f64,
    pub tick: u64,
    friction: FrictionMemory,
    last_contacts: ContactReport,
}

impl World {
    /// World with the box resting upright at `box_start` (its z is replaced
    /// by the resting height) and both effectors at home.
    pub fn new(config: &WorldConfig, box_spec: &BoxSpec, box_start: &Pose) -> Result<Self, SimError> {
        config.validate()?;
        box_spec
            .validate()
            .map_err(|_| SimError::InvalidParameter { what: "box", value: box_spec.mass })?;
        let mut start = *box_start;
        start.position.z = box_spec.rest_height(config.table_height);
        let box_body = RigidBody::new(start, box_spec.mass, box_spec.inertia())?;
        let ec = &config.effector;
        let gains = config.controller.gains(ec.mass, ec.inertia)?;
        let effectors = std::array::from_fn(|side| {
            let home = config.home_pose(side);
            Effector {
                body: RigidBody {
                    pose: home,
                    twist: Twist::zero(),
                    mass: ec.mass,
                    inertia: Vec3::repeat(ec.inertia),
                },
                disk_radius: ec.disk_radius,
                target: MotionState::at_rest(home),
                gains: gains.clone(),
                command: Wrench::zero(),
            }
        });
        Ok(Self {
            box_body,
            box_half_extents: box_spec.half_extents(),
            effectors,
            table: Some(Pose::from_translation(Vec3::new(0.0, 0.0, config.table_height))),
            contact: config.contact,
            gravity: config.gravity,
            force_limit: ec.force_limit,
            dt: config.dt,
            tick: 0,
            friction: FrictionMemory::default(),
            last_contacts: ContactReport::default(),
        })
    }

    pub fn clock(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    pub fn box_collider(&self) -> Collider {
        Collider {
            shape: Shape::Cuboid {
                half_extents: self.box_half_extents,
            },
            state: self.box_body.motion(),
        }
    }

    fn table_collider(&self) -> Option<Collider> {
        self.table.map(|pose| Collider {
            shape: Shape::HalfSpace,
            state: MotionState::at_rest(pose),
        })
    }

    pub fn contacts(&self) -> &ContactReport {
        &self.last_contacts
    }

    pub fn set_target(&mut self, side: usize, target: MotionState) {
        self.effectors[side].target = target;
    }

    /// Discards stored friction state for the box (used when the box is
    /// teleported).
    pub fn clear_box_friction(&mut self) {
        let mem = FrictionMemory::default();
        self.friction.box_table = mem.box_table;
        self.friction.effector_box = mem.effector_box;
    }

    fn check_finite(&self) -> Result<(), SimError> {
        let bad = |what| {
            Err(SimError::NonFinite {
                what,
                tick: self.tick,
                dump: self.dump(),
            })
        };
        if !self.box_body.motion().is_finite() {
            return bad("box state");
        }
        for e in &self.effectors {
            if !e.body.motion().is_finite() {
                return bad("effector state");
            }
            if !e.target.is_finite() {
                return bad("effector target");
            }
        }
        Ok(())
    }

    /// Advances one step of `dt`.
    pub fn step(&mut self) -> Result<(), SimError> {
        self.check_finite()?;
        let dt = self.dt;
        let mut box_wrench = Wrench {
            force: Vec3::new(0.0, 0.0, -self.gravity * self.box_body.mass),
            torque: Vec3::zeros(),
        };
        let mut eff_wrench = [Wrench::zero(); 2];
        for (i, e) in self.effectors.iter_mut().enumerate() {
            let mut w = e.impedance_wrench()?;
            w.force = w.force.map(|f| f.clamp(-self.force_limit, self.force_limit));
            e.command = w;
            eff_wrench[i] = w;
        }

        let box_c = self.box_collider();
        let table_c = self.table_collider();
        let mut report = ContactReport::default();
        let mut memory = self.friction.clone();
        for i in 0..2 {
            let ec = self.effectors[i].collider();
            let c = contact_forces(&ec, &box_c, &self.contact, &self.friction.effector_box[i], dt)?;
            eff_wrench[i] += c.on_a;
            box_wrench += c.on_b;
            memory.effector_box[i] = c.memory.clone();
            report.effector_box[i] = Some(c);
            if let Some(tc) = &table_c {
                let c = contact_forces(&ec, tc, &self.contact, &self.friction.effector_table[i], dt)?;
                eff_wrench[i] += c.on_a;
                memory.effector_table[i] = c.memory.clone();
                report.effector_table[i] = Some(c);
            }
        }
        if let Some(tc) = &table_c {
            let c = contact_forces(&box_c, tc, &self.contact, &self.friction.box_table, dt)?;
            box_wrench += c.on_a;
            memory.box_table = c.memory.clone();
            report.box_table = Some(c);
        }

        self.box_body.integrate(&box_wrench, dt);
        for (e, w) in self.effectors.iter_mut().zip(eff_wrench.iter()) {
            e.body.integrate(w, dt);
        }
        self.friction = memory;
        self.last_contacts = report;
        self.tick += 1;
        self.check_finite()
    }

    /// Functional form of [`step`](Self::step).
    pub fn stepped(&self) -> Result<World, SimError> {
        let mut next = self.clone();
        next.step()?;
        Ok(next)
    }

    /// Structured text dump of the dynamic state, for fault diagnostics.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let pose = |p: &Pose| {
            let q = p.rotation.quaternion();
            format!(
                "position = {:?}\norientation = {:?}\n",
                [p.position.x, p.position.y, p.position.z],
                [q.w, q.i, q.j, q.k]
            )
        };
        let twist = |t: &Twist| {
            format!(
                "linear = {:?}\nangular = {:?}\n",
                [t.linear.x, t.linear.y, t.linear.z],
                [t.angular.x, t.angular.y, t.angular.z]
            )
        };
        s.push_str(&format!("tick = {}\nclock = {:?}\n\n[box]\n", self.tick, self.clock()));
        s.push_str(&pose(&self.box_body.pose));
        s.push_str(&twist(&self.box_body.twist));
        for (i, e) in self.effectors.iter().enumerate() {
            s.push_str(&format!("\n[[effector]]\nindex = {i}\n"));
            s.push_str(&pose(&e.body.pose));
            s.push_str(&twist(&e.body.twist));
            s.push_str(&format!(
                "command_force = {:?}\ncommand_torque = {:?}\n",
                [e.command.force.x, e.command.force.y, e.command.force.z],
                [e.command.torque.x, e.command.torque.y, e.command.torque.z]
            ));
            s.push_str("[effector.target]\n");
            s.push_str(&pose(&e.target.pose));
            s.push_str(&twist(&e.target.twist));
        }
        s
    }

    /// Lowest box corner height above the table surface.
    pub fn box_clearance(&self) -> f64 {
        let table = self.table.map_or(f64::NEG_INFINITY, |t| t.position.z);
        let (pts, _) = self.box_collider().samples();
        pts.iter().map(|p| p.z).fold(f64::INFINITY, f64::min) - table
    }

    pub fn box_up_axis(&self) -> Vec3 {
        self.box_body.pose.rotation * Vec3::z()
    }
}

/// Outcome of the static grasp check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoldCheck {
    /// Normal force on each face at equilibrium, N.
    pub face_normal_force: f64,
    /// `2 · mu · F_n`, N.
    pub friction_capacity: f64,
    /// `m · g`, N.
    pub weight: f64,
    pub held: bool,
}

/// Whether two opposed effectors whose targets sit `squeeze_depth` inside
/// opposite box faces hold the box against gravity by friction. Each face
/// sees the impedance spring in series with the contact spring.
pub fn squeeze_hold_check(world: &World, squeeze_depth: f64) -> HoldCheck {
    let k_t = world.effectors[0].gains.translational_stiffness().y;
    let k_n = world.contact.k_n;
    let face = k_t * k_n / (k_t + k_n) * squeeze_depth.max(0.0);
    let capacity = 2.0 * world.contact.mu * face;
    let weight = world.box_body.mass * world.gravity;
    HoldCheck {
        face_normal_force: face,
        friction_capacity: capacity,
        weight,
        held: capacity >= weight && face > 0.0,
    }
}

/// Yaw-only rotation for the box, helper for tests and policies.
pub fn upright(heading: f64) -> Rotation {
    geometry::yaw(heading)
}

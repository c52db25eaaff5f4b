//! Operator stand-ins. A policy looks at the session once per tick and
//! returns the inputs a human would have produced: hand poses with the
//! clutch held, or recorded rows from a trace.

use super::session::Session;
use super::trace::{SessionInput, TraceRow};
use super::HarnessError;
use crate::clutch::Hand;
use crate::geometry::{self, MotionState, Pose, Rotation, Twist, Vec3};
use crate::tasks::TaskType;
use nalgebra::UnitQuaternion;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

pub trait Policy {
    fn name(&self) -> &str;
    fn act(&mut self, session: &Session) -> Result<Vec<SessionInput>, HarnessError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    ScriptedLift,
    ScriptedSlide,
    Replay,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::ScriptedLift => "scripted-lift",
            PolicyKind::ScriptedSlide => "scripted-slide",
            PolicyKind::Replay => "replay",
        })
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scripted-lift" => Ok(PolicyKind::ScriptedLift),
            "scripted-slide" => Ok(PolicyKind::ScriptedSlide),
            "replay" => Ok(PolicyKind::Replay),
            _ => Err(format!("unknown policy {s:?} (expected scripted-lift, scripted-slide or replay)")),
        }
    }
}

/// Tuning of the scripted grasp-and-carry operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptedParams {
    /// How far each effector target is pushed inside the box face, meters.
    pub squeeze_depth: f64,
    /// Gap between an open effector and the box face, meters.
    pub clearance: f64,
    /// Transit height above the table, meters.
    pub safe_height: f64,
    pub transit_speed: f64,
    pub carry_speed: f64,
    /// rad/s
    pub yaw_rate: f64,
    /// Pause after closing or placing, seconds.
    pub settle_s: f64,
    /// Integral gain of the final placement correction, 1/s.
    pub hold_gain: f64,
    /// Give up the grasp when the box lags its planned pose by this much.
    pub slip_abort: f64,
}

impl Default for ScriptedParams {
    fn default() -> Self {
        Self {
            squeeze_depth: 0.05,
            clearance: 0.05,
            safe_height: 0.30,
            transit_speed: 0.30,
            carry_speed: 0.15,
            yaw_rate: 1.0,
            settle_s: 0.3,
            hold_gain: 2.0,
            slip_abort: 0.05,
        }
    }
}

/// Both effector targets described as a grip frame: a center, a heading
/// and the half distance between the two faces. The left effector sits on
/// the frame's +y side facing -y; the right one mirrors it.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Grip {
    center: Vec3,
    heading: f64,
    half_width: f64,
}

impl Grip {
    fn poses(&self) -> [Pose; 2] {
        let r = geometry::yaw(self.heading);
        let side = |sign: f64| {
            Pose::from_parts(
                self.center + r * Vec3::new(0.0, sign * self.half_width, 0.0),
                r * UnitQuaternion::from_axis_angle(&Vec3::x_axis(), sign * FRAC_PI_2),
            )
        };
        [side(1.0), side(-1.0)]
    }

    fn lerp(&self, to: &Grip, s: f64) -> Grip {
        Grip {
            center: self.center + (to.center - self.center) * s,
            heading: self.heading + (to.heading - self.heading) * s,
            half_width: self.half_width + (to.half_width - self.half_width) * s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Step {
    To(Grip, Speed),
    /// Lower the grip so the carried box rests on the table.
    Place,
    Open,
    Rise,
    Wait(f64),
    Attach,
    Detach,
    /// Servo the box onto the target until it is accepted.
    Hold { center: Vec3, heading: f64, index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Speed {
    Transit,
    Carry,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Motion {
    from: Grip,
    to: Grip,
    start: u64,
    ticks: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Active {
    Move(Motion),
    Wait { until: u64 },
    Hold { center: Vec3, heading: f64, index: usize },
}

/// Grasps the box between the two effector faces, carries it to the
/// current target, holds it there until accepted, puts it down and lets go.
/// Lifting carries the box through the air; sliding drags it along the
/// table. The clutch stays engaged throughout, so the hand poses equal the
/// desired effector targets.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    name: String,
    task: TaskType,
    params: ScriptedParams,
    grip: Option<Grip>,
    previous: Option<[Pose; 2]>,
    queue: VecDeque<Step>,
    active: Option<Active>,
    carrying: bool,
    /// Upward offset that cancels the sag of the springs under the box
    /// weight while carrying.
    lift_offset: f64,
    box_half_width: f64,
    integral: Vec3,
    yaw_integral: f64,
}

impl ScriptedPolicy {
    pub fn new(task: TaskType, params: ScriptedParams) -> Self {
        let name = match task {
            TaskType::Lifting => PolicyKind::ScriptedLift,
            TaskType::Sliding => PolicyKind::ScriptedSlide,
        };
        Self {
            name: name.to_string(),
            task,
            params,
            grip: None,
            previous: None,
            queue: VecDeque::new(),
            active: None,
            carrying: false,
            lift_offset: 0.0,
            box_half_width: 0.0,
            integral: Vec3::zeros(),
            yaw_integral: 0.0,
        }
    }

    fn safe_z(&self, session: &Session) -> f64 {
        let w = session.world();
        let table = w.table.map_or(0.0, |t| t.position.z);
        let box_top = w.box_body.pose.position.z + w.box_half_extents.z;
        let radius = w.effectors[0].disk_radius;
        (table + self.params.safe_height).max(box_top + radius + 0.03)
    }

    /// Queue a full grasp, carry, hold, release cycle for the current
    /// target, starting from wherever the box is now.
    fn plan(&mut self, session: &Session) {
        let Some(target) = session.current_target().copied() else {
            return;
        };
        let world = session.world();
        let b = world.box_body.pose;
        if world.box_up_axis().z < 0.95 {
            // Not graspable from the side; wait for someone to stand it up.
            self.queue.push_back(Step::Wait(1.0));
            return;
        }
        let p = &self.params;
        let box_heading = geometry::heading(&b.rotation);
        // Grip across the pair of faces whose normal is closest to world y.
        let grip_heading = box_heading - (box_heading / FRAC_PI_2).round() * FRAC_PI_2;
        let axis = b.rotation.inverse() * (geometry::yaw(grip_heading) * Vec3::y());
        let h = world.box_half_extents;
        self.box_half_width = axis.x.abs() * h.x + axis.y.abs() * h.y;
        let open = self.box_half_width + p.clearance;
        let closed = self.box_half_width - p.squeeze_depth;

        let goal_heading = geometry::heading(&target.pose.rotation);
        let mut turn = geometry::wrap_angle(goal_heading - box_heading);
        if target.yaw_symmetric && turn.abs() > FRAC_PI_2 {
            turn -= PI.copysign(turn);
        }

        let k = world.effectors[0].gains.translational_stiffness().z;
        self.lift_offset = match self.task {
            TaskType::Lifting => world.box_body.mass * world.gravity / (2.0 * k),
            TaskType::Sliding => 0.0,
        };
        let lift = Vec3::new(0.0, 0.0, self.lift_offset);
        let safe = self.safe_z(session);
        let at = |center: Vec3, heading: f64, half_width: f64| Grip {
            center,
            heading,
            half_width,
        };

        let q = &mut self.queue;
        q.push_back(Step::Rise);
        q.push_back(Step::To(at(Vec3::new(b.position.x, b.position.y, safe), grip_heading, open), Speed::Transit));
        q.push_back(Step::To(at(b.position, grip_heading, open), Speed::Transit));
        q.push_back(Step::To(at(b.position, grip_heading, closed), Speed::Carry));
        q.push_back(Step::Wait(p.settle_s));
        q.push_back(Step::Attach);
        let goal = match self.task {
            TaskType::Lifting => {
                let raised = Vec3::new(b.position.x, b.position.y, target.pose.position.z) + lift;
                q.push_back(Step::To(at(raised, grip_heading, closed), Speed::Carry));
                target.pose.position + lift
            }
            TaskType::Sliding => Vec3::new(target.pose.position.x, target.pose.position.y, b.position.z),
        };
        q.push_back(Step::To(at(goal, grip_heading + turn, closed), Speed::Carry));
        q.push_back(Step::Hold {
            center: goal,
            heading: grip_heading + turn,
            index: session.sequencer().index(),
        });
        if self.task == TaskType::Lifting {
            q.push_back(Step::Place);
            q.push_back(Step::Wait(p.settle_s));
        }
        q.push_back(Step::Detach);
        q.push_back(Step::Open);
        q.push_back(Step::Rise);
    }

    fn start_move(&self, to: Grip, speed: f64, tick: u64, dt: f64) -> Active {
        let from = self.grip.expect("grip initialized");
        let dist = (to.center - from.center).norm().max((to.half_width - from.half_width).abs());
        let secs = (dist / speed).max((to.heading - from.heading).abs() / self.params.yaw_rate).max(0.05);
        Active::Move(Motion {
            from,
            to,
            start: tick,
            ticks: (secs / dt).ceil() as u64,
        })
    }

    /// Pops steps until one takes time.
    fn next_active(&mut self, session: &Session) -> Option<Active> {
        let tick = session.tick_count();
        let dt = session.world().dt;
        while let Some(step) = self.queue.pop_front() {
            let grip = self.grip.expect("grip initialized");
            let active = match step {
                Step::To(to, speed) => {
                    let v = match speed {
                        Speed::Transit => self.params.transit_speed,
                        Speed::Carry => self.params.carry_speed,
                    };
                    self.start_move(to, v, tick, dt)
                }
                Step::Place => {
                    let w = session.world();
                    let rest = w.table.map_or(0.0, |t| t.position.z) + w.box_half_extents.z;
                    let mut to = grip;
                    to.center.z = rest + self.lift_offset + 0.002;
                    self.start_move(to, self.params.carry_speed, tick, dt)
                }
                Step::Open => {
                    let mut to = grip;
                    to.half_width = self.box_half_width + self.params.clearance;
                    self.start_move(to, self.params.carry_speed, tick, dt)
                }
                Step::Rise => {
                    let mut to = grip;
                    to.center.z = to.center.z.max(self.safe_z(session));
                    self.start_move(to, self.params.transit_speed, tick, dt)
                }
                Step::Wait(secs) => Active::Wait {
                    until: tick + (secs / dt).ceil() as u64,
                },
                Step::Attach => {
                    self.carrying = true;
                    continue;
                }
                Step::Detach => {
                    self.carrying = false;
                    continue;
                }
                Step::Hold { center, heading, index } => {
                    self.integral = Vec3::zeros();
                    self.yaw_integral = 0.0;
                    Active::Hold { center, heading, index }
                }
            };
            return Some(active);
        }
        None
    }

    /// Advances the active step; returns false when it has finished.
    fn run_active(&mut self, active: Active, session: &Session) -> bool {
        let tick = session.tick_count();
        match active {
            Active::Move(m) => {
                let u = ((tick + 1 - m.start) as f64 / m.ticks as f64).min(1.0);
                let s = u * u * (3.0 - 2.0 * u);
                self.grip = Some(m.from.lerp(&m.to, s));
                u < 1.0
            }
            Active::Wait { until } => tick < until,
            Active::Hold { center, heading, index } => {
                if session.sequencer().index() != index {
                    return false;
                }
                let Some(target) = session.current_target() else {
                    return false;
                };
                let dt = session.world().dt;
                let gain = self.params.hold_gain * dt;
                let b = session.world().box_body.pose;
                let mut err = target.pose.position - b.position;
                if self.task == TaskType::Sliding {
                    err.z = 0.0;
                }
                self.integral += err * gain;
                if self.integral.norm() > 0.05 {
                    self.integral *= 0.05 / self.integral.norm();
                }
                let mut yaw_err = geometry::wrap_angle(geometry::heading(&target.pose.rotation) - geometry::heading(&b.rotation));
                if target.yaw_symmetric && yaw_err.abs() > FRAC_PI_2 {
                    yaw_err -= PI.copysign(yaw_err);
                }
                self.yaw_integral = (self.yaw_integral + yaw_err * gain).clamp(-0.3, 0.3);
                let mut grip = self.grip.expect("grip initialized");
                grip.center = center + self.integral;
                grip.heading = heading + self.yaw_integral;
                self.grip = Some(grip);
                true
            }
        }
    }

    /// Abandons the carry when the box no longer follows the grip.
    fn check_slip(&mut self, session: &Session) {
        if !self.carrying {
            return;
        }
        let grip = self.grip.expect("grip initialized");
        let expected = grip.center - Vec3::new(0.0, 0.0, self.lift_offset);
        if (session.world().box_body.pose.position - expected).norm() > self.params.slip_abort {
            self.carrying = false;
            self.active = None;
            self.queue.clear();
            self.queue.extend([Step::Open, Step::Rise]);
        }
    }
}

impl Policy for ScriptedPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&mut self, session: &Session) -> Result<Vec<SessionInput>, HarnessError> {
        let world = session.world();
        if self.grip.is_none() {
            let [l, r] = [world.effectors[0].target.pose.position, world.effectors[1].target.pose.position];
            self.grip = Some(Grip {
                center: 0.5 * (l + r),
                heading: 0.0,
                half_width: 0.5 * (l - r).norm(),
            });
        }
        if !session.is_finished() {
            self.check_slip(session);
            loop {
                if self.active.is_none() {
                    if self.queue.is_empty() {
                        self.plan(session);
                    }
                    self.active = self.next_active(session);
                }
                let Some(active) = self.active else {
                    break;
                };
                if self.run_active(active, session) {
                    break;
                }
                self.active = None;
                if self.queue.is_empty() {
                    break;
                }
            }
        }

        let poses = self.grip.expect("grip initialized").poses();
        let dt = world.dt;
        let inputs = Hand::BOTH
            .iter()
            .map(|&hand| {
                let i = hand.index();
                let twist = match &self.previous {
                    Some(prev) => finite_difference(&prev[i], &poses[i], dt),
                    None => Twist::zero(),
                };
                SessionInput::Hand {
                    hand,
                    state: MotionState::new(poses[i], twist),
                    button: true,
                }
            })
            .collect();
        self.previous = Some(poses);
        Ok(inputs)
    }
}

fn finite_difference(a: &Pose, b: &Pose, dt: f64) -> Twist {
    let dq: Rotation = b.rotation * a.rotation.inverse();
    Twist {
        linear: (b.position - a.position) / dt,
        angular: geometry::log(&dq) / dt,
    }
}

/// Feeds back the rows of a recorded trace at their ticks.
#[derive(Debug, Clone)]
pub struct ReplayPolicy {
    rows: Vec<TraceRow>,
    next: usize,
}

impl ReplayPolicy {
    pub fn new(rows: Vec<TraceRow>) -> Result<Self, HarnessError> {
        for w in rows.windows(2) {
            if w[1].tick < w[0].tick {
                return Err(HarnessError::Trace(format!("tick {} after tick {}: not monotone", w[1].tick, w[0].tick)));
            }
        }
        for r in &rows {
            r.input()?;
        }
        Ok(Self { rows, next: 0 })
    }

    pub fn is_exhausted(&self) -> bool {
        self.next >= self.rows.len()
    }
}

impl Policy for ReplayPolicy {
    fn name(&self) -> &str {
        "replay"
    }

    fn act(&mut self, session: &Session) -> Result<Vec<SessionInput>, HarnessError> {
        let tick = session.tick_count();
        let mut out = Vec::new();
        while let Some(row) = self.rows.get(self.next) {
            if row.tick > tick {
                break;
            }
            out.push(row.input()?);
            self.next += 1;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grip_at_zero_heading_reproduces_home() {
        let c = crate::sim::WorldConfig::default();
        let g = Grip {
            center: Vec3::new(0.5, 0.0, 0.25),
            heading: 0.0,
            half_width: 0.30,
        };
        let [l, r] = g.poses();
        assert!((l.position - c.home_pose(0).position).norm() < 1e-12);
        assert!((r.position - c.home_pose(1).position).norm() < 1e-12);
        assert!(geometry::geodesic_angle(&l.rotation, &c.home_pose(0).rotation) < 1e-12);
        assert!(geometry::geodesic_angle(&r.rotation, &c.home_pose(1).rotation) < 1e-12);
    }

    #[test]
    fn grip_faces_point_inward() {
        let g = Grip {
            center: Vec3::zeros(),
            heading: 0.3,
            half_width: 0.1,
        };
        let [l, r] = g.poses();
        let nl = l.rotation * Vec3::z();
        let nr = r.rotation * Vec3::z();
        assert!((nl.normalize() - (g.center - l.position).normalize()).norm() < 1e-12);
        assert!((nr.normalize() - (g.center - r.position).normalize()).norm() < 1e-12);
    }

    #[test]
    fn finite_difference_recovers_twist() {
        let a = Pose::from_parts(Vec3::new(0.1, 0.2, 0.3), geometry::exp(&Vec3::new(0.1, 0.2, 0.3)));
        let w = Vec3::new(0.5, -0.2, 0.1);
        let b = Pose::from_parts(a.position + Vec3::new(1e-3, 0.0, 0.0), geometry::exp(&(w * 1e-3)) * a.rotation);
        let t = finite_difference(&a, &b, 1e-3);
        assert!((t.linear - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-9);
        assert!((t.angular - w).norm() < 1e-9);
    }

    #[test]
    fn policy_kind_parsing() {
        for k in [PolicyKind::ScriptedLift, PolicyKind::ScriptedSlide, PolicyKind::Replay] {
            assert_eq!(k.to_string().parse::<PolicyKind>().unwrap(), k);
        }
        assert!("teleport".parse::<PolicyKind>().is_err());
    }
}

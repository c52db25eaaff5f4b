//! One operator session: world, clutch channels, target sequencer and the
//! drop/flip monitor, advanced one tick at a time.

use super::record::{Condition, TrialRecord};
use super::scenario::ResolvedScenario;
use super::trace::{SessionInput, TraceRow};
use super::HarnessError;
use crate::clutch::{ClutchChannel, Hand};
use crate::geometry::{self, MotionState, Pose, Vec3};
use crate::sim::World;
use crate::tasks::{Scenario, TargetSequencer, TargetSpec, TaskEvent};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

/// Seeded perturbation of the initial box pose.
const START_JITTER_POSITION: f64 = 0.003;
const START_JITTER_YAW: f64 = 0.03;

/// Vertical slip of the box against a two-sided grasp that counts as a drop.
pub const DROP_SLIP: f64 = 0.02;
/// Box lowest corner must be this far above the table to count as airborne.
pub const AIRBORNE_CLEARANCE: f64 = 0.002;
/// Tilt of the box's up axis that counts as a flip, and the tilt below which
/// the box counts as upright again.
pub const FLIP_TILT: f64 = std::f64::consts::FRAC_PI_4;
const UPRIGHT_TILT: f64 = 0.35;

/// Counts drops and flips for the current target.
///
/// A drop is either the box falling onto the table after losing contact with
/// both effectors while airborne, or the box sliding more than
/// [`DROP_SLIP`] vertically through a two-sided grasp. One grasp episode
/// counts at most one drop.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Monitor {
    pub drops: u32,
    pub flips: u32,
    grasp_ref: Option<f64>,
    episode_dropped: bool,
    falling: bool,
    flipped: bool,
}

impl Monitor {
    pub fn observe(&mut self, world: &World) {
        let c = world.contacts();
        let both = c.effector_touches_box(0) && c.effector_touches_box(1);
        let any = c.effector_touches_box(0) || c.effector_touches_box(1);
        let box_z = world.box_body.pose.position.z;
        let grip_z = 0.5 * (world.effectors[0].body.pose.position.z + world.effectors[1].body.pose.position.z);

        if both {
            let rel = box_z - grip_z;
            let reference = *self.grasp_ref.get_or_insert(rel);
            if !self.episode_dropped && (rel - reference).abs() > DROP_SLIP {
                self.drops += 1;
                self.episode_dropped = true;
            }
        } else if !any {
            if self.grasp_ref.is_some() && world.box_clearance() > AIRBORNE_CLEARANCE {
                self.falling = true;
            }
            self.grasp_ref = None;
        }
        if self.falling && c.box_on_table() {
            if !self.episode_dropped {
                self.drops += 1;
            }
            self.falling = false;
        }
        if !any {
            self.episode_dropped = false;
        }

        let tilt = world.box_up_axis().z.clamp(-1.0, 1.0).acos();
        if !self.flipped && tilt > FLIP_TILT {
            self.flips += 1;
            self.flipped = true;
        } else if self.flipped && tilt < UPRIGHT_TILT {
            self.flipped = false;
        }
    }

    fn reset_counts(&mut self) {
        self.drops = 0;
        self.flips = 0;
    }
}

/// Live state of one trial.
#[derive(Debug, Clone)]
pub struct Session {
    world: World,
    clutches: [ClutchChannel; 2],
    sequencer: TargetSequencer,
    scenario: Scenario,
    condition: Condition,
    agent_id: String,
    timeout_ticks: u64,
    pending: Vec<SessionInput>,
    trace: Option<Vec<TraceRow>>,
    monitor: Monitor,
    records: Vec<TrialRecord>,
    stopped: bool,
}

impl Session {
    pub fn new(
        resolved: &ResolvedScenario,
        condition: Condition,
        seed: u64,
        agent_id: impl Into<String>,
    ) -> Result<Self, HarnessError> {
        let scenario = resolved.scenario.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut start = scenario.start;
        start.position.x += rng.gen_range(-START_JITTER_POSITION..=START_JITTER_POSITION);
        start.position.y += rng.gen_range(-START_JITTER_POSITION..=START_JITTER_POSITION);
        start.rotation = geometry::yaw(rng.gen_range(-START_JITTER_YAW..=START_JITTER_YAW)) * start.rotation;
        let world = World::new(&resolved.world, &scenario.box_spec, &start)?;
        let clutches = std::array::from_fn(|i| {
            ClutchChannel::new(world.effectors[i].target.pose).with_clamp(resolved.trial.target_workspace)
        });
        let timeout_ticks = (resolved.trial.timeout_s / resolved.world.dt).round() as u64;
        Ok(Self {
            world,
            clutches,
            sequencer: TargetSequencer::new(scenario.targets.clone()),
            scenario,
            condition,
            agent_id: agent_id.into(),
            timeout_ticks: timeout_ticks.max(1),
            pending: Vec::new(),
            trace: None,
            monitor: Monitor::default(),
            records: Vec::new(),
            stopped: false,
        })
    }

    /// Keep a log of every applied input so the session can be replayed.
    pub fn record_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn take_trace(&mut self) -> Vec<TraceRow> {
        self.trace.take().unwrap_or_default()
    }

    pub fn trace(&self) -> &[TraceRow] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn sequencer(&self) -> &TargetSequencer {
        &self.sequencer
    }

    pub fn current_target(&self) -> Option<&TargetSpec> {
        self.sequencer.current()
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    /// Changes only the label attached to future records.
    pub fn set_condition(&mut self, condition: Condition) {
        self.condition = condition;
    }

    pub fn agent_id(&self) -> &str {
        &self.agent_id
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn monitor(&self) -> &Monitor {
        &self.monitor
    }

    pub fn tick_count(&self) -> u64 {
        self.world.tick
    }

    pub fn clutch_engaged(&self, hand: Hand) -> bool {
        self.clutches[hand.index()].engaged()
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    /// All targets handled, or the session was stopped.
    pub fn is_finished(&self) -> bool {
        self.stopped || self.sequencer.is_finished()
    }

    /// True when every target was completed (none timed out).
    pub fn all_completed(&self) -> bool {
        self.sequencer.is_finished() && self.records.iter().all(|r| r.completed)
    }

    /// Queue an input for the next tick.
    pub fn queue(&mut self, input: SessionInput) {
        self.pending.push(input);
    }

    /// Queue a clutch release for both hands.
    pub fn release_all(&mut self) {
        for hand in Hand::BOTH {
            self.queue(SessionInput::Release { hand });
        }
    }

    fn apply(&mut self, input: SessionInput) {
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRow::new(self.world.tick, self.world.dt, &input));
        }
        match input {
            SessionInput::Hand { hand, state, button } => self.clutches[hand.index()].set_input(state, button),
            SessionInput::Release { hand } => self.clutches[hand.index()].release(),
            SessionInput::ResetBoxUpright => self.reset_box_upright(),
            SessionInput::Stop => self.stopped = true,
        }
    }

    /// Applies queued inputs, then advances the world by one step and
    /// evaluates the current target. Does nothing once stopped.
    pub fn tick(&mut self) -> Result<Vec<TaskEvent>, HarnessError> {
        for input in std::mem::take(&mut self.pending) {
            if self.stopped {
                break;
            }
            self.apply(input);
        }
        if self.stopped {
            return Ok(Vec::new());
        }
        for (i, ch) in self.clutches.iter_mut().enumerate() {
            let target = ch.update();
            self.world.set_target(i, target);
        }
        self.world.step()?;
        self.monitor.observe(&self.world);

        let tick = self.world.tick;
        let mut events = self.sequencer.advance(&self.world.box_body.pose, tick);
        if !self.sequencer.is_finished() && events.is_empty() && self.sequencer.elapsed(tick) >= self.timeout_ticks {
            events = self.sequencer.skip(tick);
        }
        for ev in &events {
            self.record(ev);
        }
        Ok(events)
    }

    fn record(&mut self, ev: &TaskEvent) {
        let (index, completed, time) = match *ev {
            TaskEvent::Completed {
                index,
                presented_tick,
                tick,
            } => (index, true, Some((tick - presented_tick) as f64 * self.world.dt)),
            TaskEvent::TimedOut { index, .. } => (index, false, None),
            TaskEvent::Finished { .. } => return,
        };
        self.records.push(TrialRecord {
            agent_id: self.agent_id.clone(),
            condition: self.condition,
            task_type: self.scenario.task_type,
            target_index: index,
            completed,
            completion_time_s: time,
            drop_count: self.monitor.drops,
            flip_count: self.monitor.flips,
        });
        self.monitor.reset_counts();
    }

    /// Stands the box upright at rest on the table, keeping its heading. The
    /// box is never moved closer to the current target: if standing it up
    /// would reduce the distance, it is pushed horizontally away from the
    /// target until the distance is restored.
    pub fn reset_box_upright(&mut self) {
        let before = self.world.box_body.pose;
        let rest_z = self.scenario.box_spec.rest_height(self.world.table.map_or(0.0, |t| t.position.z));
        let mut p = Vec3::new(before.position.x, before.position.y, rest_z);
        if let Some(target) = self.sequencer.current() {
            let goal = target.pose.position;
            let d0 = (before.position - goal).norm();
            let dz = rest_z - goal.z;
            let needed = (d0 * d0 - dz * dz).max(0.0).sqrt();
            let mut radial = p.xy() - goal.xy();
            if radial.norm() < needed {
                if radial.norm() < 1e-9 {
                    radial = nalgebra::Vector2::x();
                }
                let r = radial.normalize() * needed;
                p.x = goal.x + r.x;
                p.y = goal.y + r.y;
                // Guard against rounding pulling the box a hair closer.
                let mut scale = 1.0;
                while (p - goal).norm() < d0 {
                    scale += 1e-12;
                    p.x = goal.x + r.x * scale;
                    p.y = goal.y + r.y * scale;
                }
            }
        }
        self.world.box_body.pose = Pose::from_parts(p, geometry::yaw(geometry::heading(&before.rotation)));
        self.world.box_body.twist = crate::geometry::Twist::zero();
        self.world.clear_box_friction();
    }

    /// Effector targets as currently commanded.
    pub fn targets(&self) -> [MotionState; 2] {
        [self.world.effectors[0].target, self.world.effectors[1].target]
    }

    /// One line of physics state, printed with round-trip precision.
    pub fn state_line(&self) -> String {
        let mut s = format!("{}", self.world.tick);
        let mut pose = |p: &Pose| {
            let q = p.rotation.quaternion();
            for v in [p.position.x, p.position.y, p.position.z, q.w, q.i, q.j, q.k] {
                let _ = write!(s, ",{v:?}");
            }
        };
        pose(&self.world.box_body.pose);
        for e in &self.world.effectors {
            pose(&e.body.pose);
            pose(&e.target.pose);
        }
        s
    }

    pub const STATE_HEADER: &'static str = "tick,box(p,q),left(p,q),left_target(p,q),right(p,q),right_target(p,q)";
}

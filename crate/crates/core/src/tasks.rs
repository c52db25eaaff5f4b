//! Box-placement tasks: targets, the completion test, seeded scenario
//! layouts and the target sequencer.

use crate::geometry::{self, yaw, Aabb, Pose, Rotation, Vec3};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

/// Default position tolerance, meters.
pub const POSITION_TOLERANCE: f64 = 0.030;
/// Default orientation tolerance, radians.
pub const ROTATION_TOLERANCE: f64 = 0.4;

/// Lifting targets sit this far above the resting height (meters).
pub const LIFT_HEIGHT_RANGE: (f64, f64) = (0.05, 0.25);
/// Lifting target heights are pairwise at least this far apart.
pub const LIFT_HEIGHT_SPACING: f64 = 1e-3;
/// Consecutive targets (and the start pose and the first target) are at
/// least this far apart, so a new target is never complete on presentation.
pub const MIN_TARGET_SEPARATION: f64 = 0.06;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TaskError {
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("invalid target {index}: {reason}")]
    InvalidTarget { index: usize, reason: String },
    #[error("cannot place {count} {task} targets (at most {capacity} fit)")]
    CountExceedsCapacity {
        task: TaskType,
        count: usize,
        capacity: usize,
    },
    #[error("workspace cannot hold the requested targets: {0}")]
    Workspace(String),
    #[error("scenario file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskType {
    Lifting,
    Sliding,
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskType::Lifting => "lifting",
            TaskType::Sliding => "sliding",
        })
    }
}

impl std::str::FromStr for TaskType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lifting" => Ok(TaskType::Lifting),
            "sliding" => Ok(TaskType::Sliding),
            other => Err(format!("unknown task type {other:?}")),
        }
    }
}

/// The manipulated box: a uniform cuboid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxSpec {
    /// Full extents along the box x, y, z axes, meters. z is vertical when
    /// upright.
    pub dims: [f64; 3],
    /// kg
    pub mass: f64,
    pub yaw_symmetry: bool,
}

impl Default for BoxSpec {
    fn default() -> Self {
        Self {
            dims: [0.16, 0.16, 0.20],
            mass: 0.635,
            yaw_symmetry: true,
        }
    }
}

impl BoxSpec {
    pub fn validate(&self) -> Result<(), TaskError> {
        if !self.dims.iter().all(|d| d.is_finite() && *d > 0.0) {
            return Err(TaskError::InvalidBox(format!("dims must be positive, got {:?}", self.dims)));
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(TaskError::InvalidBox(format!("mass must be positive, got {}", self.mass)));
        }
        Ok(())
    }

    pub fn half_extents(&self) -> Vec3 {
        Vec3::from(self.dims) * 0.5
    }

    /// Height of the box center when upright on a table at `table_height`.
    pub fn rest_height(&self, table_height: f64) -> f64 {
        table_height + 0.5 * self.dims[2]
    }

    /// Principal moments of inertia of the uniform cuboid.
    pub fn inertia(&self) -> Vec3 {
        let [a, b, c] = self.dims;
        let k = self.mass / 12.0;
        Vec3::new(k * (b * b + c * c), k * (a * a + c * c), k * (a * a + b * b))
    }
}

/// A target pose for the box (the green cuboid) with its tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub pose: Pose,
    /// meters
    #[serde(default = "default_pos_tol")]
    pub pos_tol: f64,
    /// radians
    #[serde(default = "default_rot_tol")]
    pub rot_tol: f64,
    /// Accept the target rotated by π about the vertical axis as well.
    #[serde(default = "default_true")]
    pub yaw_symmetric: bool,
}

fn default_pos_tol() -> f64 {
    POSITION_TOLERANCE
}
fn default_rot_tol() -> f64 {
    ROTATION_TOLERANCE
}
fn default_true() -> bool {
    true
}

impl TargetSpec {
    pub fn new(pose: Pose) -> Self {
        Self {
            pose,
            pos_tol: POSITION_TOLERANCE,
            rot_tol: ROTATION_TOLERANCE,
            yaw_symmetric: true,
        }
    }

    pub fn validate(&self, index: usize) -> Result<(), TaskError> {
        let bad = |reason: String| Err(TaskError::InvalidTarget { index, reason });
        if !self.pose.is_finite() {
            return bad("non-finite pose".into());
        }
        if !(self.pos_tol.is_finite() && self.pos_tol > 0.0) {
            return bad(format!("position tolerance must be > 0, got {}", self.pos_tol));
        }
        if !(self.rot_tol > 0.0 && self.rot_tol < PI) {
            return bad(format!("rotation tolerance must be in (0, π), got {}", self.rot_tol));
        }
        Ok(())
    }

    /// The symmetry rotation: a half turn about the vertical axis.
    pub fn symmetry() -> Rotation {
        yaw(PI)
    }

    /// Orientation error to the closest symmetric copy of the target.
    pub fn rotation_error(&self, box_rotation: &Rotation) -> f64 {
        let direct = geometry::log(&(box_rotation.inverse() * self.pose.rotation)).norm();
        if !self.yaw_symmetric {
            return direct;
        }
        let flipped =
            geometry::log(&(box_rotation.inverse() * Self::symmetry() * self.pose.rotation)).norm();
        direct.min(flipped)
    }
}

/// Whether the box pose satisfies the target's position and orientation
/// tolerances (strict inequalities).
pub fn is_complete(box_pose: &Pose, target: &TargetSpec) -> bool {
    (box_pose.position - target.pose.position).norm() < target.pos_tol
        && target.rotation_error(&box_pose.rotation) < target.rot_tol
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub task_type: TaskType,
    pub seed: u64,
    #[serde(rename = "box", default)]
    pub box_spec: BoxSpec,
    /// Initial box pose.
    pub start: Pose,
    #[serde(default)]
    pub targets: Vec<TargetSpec>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), TaskError> {
        self.box_spec.validate()?;
        if !self.start.is_finite() {
            return Err(TaskError::Parse("non-finite start pose".into()));
        }
        self.targets
            .iter()
            .enumerate()
            .try_for_each(|(i, t)| t.validate(i))
    }
}

/// Where targets may be placed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Layout {
    /// Bounds on target box-center positions.
    pub workspace: Aabb,
    pub table_height: f64,
    #[serde(rename = "box")]
    pub box_spec: BoxSpec,
    /// Horizontal start position of the box center; z is the resting height.
    pub start_xy: [f64; 2],
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            workspace: Aabb::new(Vec3::new(0.40, -0.10, 0.0), Vec3::new(0.60, 0.10, 0.40)),
            table_height: 0.0,
            box_spec: BoxSpec::default(),
            start_xy: [0.50, 0.0],
        }
    }
}

impl Layout {
    pub fn start_pose(&self) -> Pose {
        Pose::from_translation(Vec3::new(
            self.start_xy[0],
            self.start_xy[1],
            self.box_spec.rest_height(self.table_height),
        ))
    }
}

/// Yaw distance modulo the half-turn symmetry.
fn symmetric_yaw_gap(a: f64, b: f64) -> f64 {
    let d = geometry::wrap_angle(a - b).abs();
    d.min(PI - d)
}

/// Seeded target layout obeying the task-type constraints: sliding targets
/// rest on the table, lifting targets hover at distinct heights within
/// [`LIFT_HEIGHT_RANGE`] above resting height; all targets vary only in yaw.
pub fn generate_scenario(
    task_type: TaskType,
    count: usize,
    seed: u64,
    layout: &Layout,
) -> Result<Scenario, TaskError> {
    layout.box_spec.validate()?;
    if !layout.workspace.is_valid() {
        return Err(TaskError::Workspace("invalid bounds".into()));
    }
    let start = layout.start_pose();
    let mut scenario = Scenario {
        task_type,
        seed,
        box_spec: layout.box_spec,
        start,
        targets: Vec::with_capacity(count),
    };
    if count == 0 {
        return Ok(scenario);
    }

    let rest = layout.box_spec.rest_height(layout.table_height);
    let ws = &layout.workspace;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let heights: Vec<f64> = match task_type {
        TaskType::Sliding => {
            if rest < ws.min.z || rest > ws.max.z {
                return Err(TaskError::Workspace(format!("resting height {rest} outside z bounds")));
            }
            vec![rest; count]
        }
        TaskType::Lifting => {
            let lo = (rest + LIFT_HEIGHT_RANGE.0).max(ws.min.z);
            let hi = (rest + LIFT_HEIGHT_RANGE.1).min(ws.max.z);
            if hi < lo {
                return Err(TaskError::Workspace("no room for lifting heights".into()));
            }
            let slots = ((hi - lo) / LIFT_HEIGHT_SPACING + 1e-9).floor() as usize + 1;
            if count > slots {
                return Err(TaskError::CountExceedsCapacity {
                    task: task_type,
                    count,
                    capacity: slots,
                });
            }
            index::sample(&mut rng, slots, count)
                .into_iter()
                .map(|k| (lo + k as f64 * LIFT_HEIGHT_SPACING).min(hi))
                .collect()
        }
    };

    let span = ws.max - ws.min;
    let mut prev_pos = start.position;
    let mut prev_yaw = geometry::heading(&start.rotation);
    let mut yaws = Vec::with_capacity(count);
    for &z in &heights {
        let mut placed = None;
        for _ in 0..10_000 {
            let p = Vec3::new(
                ws.min.x + rng.gen::<f64>() * span.x,
                ws.min.y + rng.gen::<f64>() * span.y,
                z,
            );
            if (p - prev_pos).norm() >= MIN_TARGET_SEPARATION {
                placed = Some(p);
                break;
            }
        }
        let p = placed.ok_or_else(|| {
            TaskError::Workspace(format!(
                "cannot keep consecutive targets {MIN_TARGET_SEPARATION} m apart"
            ))
        })?;
        let heading = rng.gen_range(-PI / 2.0..PI / 2.0);
        scenario.targets.push(TargetSpec::new(Pose::from_parts(p, yaw(heading))));
        yaws.push(heading);
        prev_pos = p;
    }

    // Make sure at least one transition needs a real re-orientation.
    let mut last = prev_yaw;
    let mut needs_turn = true;
    for &y in &yaws {
        if symmetric_yaw_gap(y, last) > ROTATION_TOLERANCE {
            needs_turn = false;
        }
        last = y;
    }
    if needs_turn {
        let i = count - 1;
        if i > 0 {
            prev_yaw = yaws[i - 1];
        }
        let turned = geometry::wrap_angle(prev_yaw + PI / 2.0);
        scenario.targets[i].pose.rotation = yaw(turned);
    }
    Ok(scenario)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskEvent {
    Completed {
        index: usize,
        presented_tick: u64,
        tick: u64,
    },
    TimedOut {
        index: usize,
        presented_tick: u64,
        tick: u64,
    },
    Finished {
        tick: u64,
    },
}

/// Presents targets one after another; the next target appears on the tick
/// the previous one is completed (or skipped).
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSequencer {
    targets: Vec<TargetSpec>,
    index: usize,
    presented_tick: u64,
}

impl TargetSequencer {
    pub fn new(targets: Vec<TargetSpec>) -> Self {
        Self {
            targets,
            index: 0,
            presented_tick: 0,
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn is_finished(&self) -> bool {
        self.index >= self.targets.len()
    }

    pub fn current(&self) -> Option<&TargetSpec> {
        self.targets.get(self.index)
    }

    pub fn presented_tick(&self) -> u64 {
        self.presented_tick
    }

    /// Ticks the current target has been shown for.
    pub fn elapsed(&self, tick: u64) -> u64 {
        tick.saturating_sub(self.presented_tick)
    }

    /// Evaluates the current target against the box pose at `tick`. A target
    /// completes at most once; completion immediately presents the next one,
    /// which is first evaluated on a later tick.
    pub fn advance(&mut self, box_pose: &Pose, tick: u64) -> Vec<TaskEvent> {
        let Some(target) = self.current() else {
            return Vec::new();
        };
        if tick <= self.presented_tick && self.index > 0 {
            return Vec::new();
        }
        if !is_complete(box_pose, target) {
            return Vec::new();
        }
        let ev = TaskEvent::Completed {
            index: self.index,
            presented_tick: self.presented_tick,
            tick,
        };
        self.next(ev, tick)
    }

    /// Abandons the current target.
    pub fn skip(&mut self, tick: u64) -> Vec<TaskEvent> {
        if self.is_finished() {
            return Vec::new();
        }
        let ev = TaskEvent::TimedOut {
            index: self.index,
            presented_tick: self.presented_tick,
            tick,
        };
        self.next(ev, tick)
    }

    fn next(&mut self, ev: TaskEvent, tick: u64) -> Vec<TaskEvent> {
        self.index += 1;
        self.presented_tick = tick;
        let mut out = vec![ev];
        if self.is_finished() {
            out.push(TaskEvent::Finished { tick });
        }
        out
    }
}

//! Wire format: versioned JSON text frames. See `protocol.md`.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use teleop_core::clutch::Hand;
use teleop_core::geometry::{MotionState, Pose, Twist, Vec3, Wrench};
use teleop_core::harness::{Condition, Session, TrialRecord};
use teleop_core::tasks::TargetSpec;

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WirePose {
    /// meters
    pub position: [f64; 3],
    /// unit quaternion `[w, x, y, z]`
    pub orientation: [f64; 4],
}

impl From<&Pose> for WirePose {
    fn from(p: &Pose) -> Self {
        let q = p.rotation.quaternion();
        Self {
            position: [p.position.x, p.position.y, p.position.z],
            orientation: [q.w, q.i, q.j, q.k],
        }
    }
}

impl WirePose {
    /// Accepts quaternions within 1e-6 of unit length and normalizes them.
    pub fn to_pose(&self) -> Result<Pose, String> {
        let [w, x, y, z] = self.orientation;
        let q = nalgebra::Quaternion::new(w, x, y, z);
        if (q.norm() - 1.0).abs() > 1e-6 {
            return Err(format!("orientation is not a unit quaternion (norm {})", q.norm()));
        }
        Pose::new(Vec3::from(self.position), nalgebra::UnitQuaternion::new_normalize(q)).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WireTwist {
    /// m/s
    pub linear: [f64; 3],
    /// rad/s
    pub angular: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WireWrench {
    /// N
    pub force: [f64; 3],
    /// N·m
    pub torque: [f64; 3],
}

impl From<&Wrench> for WireWrench {
    fn from(w: &Wrench) -> Self {
        Self {
            force: w.force.into(),
            torque: w.torque.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectorView {
    pub hand: Hand,
    pub pose: WirePose,
    /// Impedance wrench applied on the last step, world frame.
    pub wrench: WireWrench,
    /// Impedance target. Absent under `novis`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<WirePose>,
    /// `target.position − pose.position`. Absent under `novis`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetView {
    pub index: usize,
    pub count: usize,
    pub pose: WirePose,
    pub pos_tol: f64,
    pub rot_tol: f64,
    pub yaw_symmetric: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialState {
    Idle,
    Running,
    Finished,
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStatus {
    pub state: TrialState,
    pub completed: usize,
    pub timed_out: usize,
    pub drops: u32,
    pub flips: u32,
}

/// Everything a client renders for one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub tick: u64,
    /// seconds
    pub clock: f64,
    pub condition: Condition,
    #[serde(rename = "box")]
    pub box_pose: WirePose,
    pub effectors: Vec<EffectorView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetView>,
    pub status: TrialStatus,
}

impl StateSnapshot {
    /// Reads the session at a tick boundary. Under `novis` the impedance
    /// target and offset are left out.
    pub fn capture(session: &Session, state: TrialState) -> Self {
        let world = session.world();
        let show = session.condition() == Condition::Vis;
        let effectors = Hand::BOTH
            .iter()
            .map(|&hand| {
                let e = &world.effectors[hand.index()];
                let pose = WirePose::from(&e.body.pose);
                let target = WirePose::from(&e.target.pose);
                EffectorView {
                    hand,
                    pose,
                    wrench: WireWrench::from(&e.command),
                    target: show.then_some(target),
                    offset: show.then(|| offset(&target, &pose)),
                }
            })
            .collect();
        let target = session.current_target().map(|t: &TargetSpec| TargetView {
            index: session.sequencer().index(),
            count: session.sequencer().len(),
            pose: WirePose::from(&t.pose),
            pos_tol: t.pos_tol,
            rot_tol: t.rot_tol,
            yaw_symmetric: t.yaw_symmetric,
        });
        let records = session.records();
        Self {
            tick: world.tick,
            clock: world.clock(),
            condition: session.condition(),
            box_pose: WirePose::from(&world.box_body.pose),
            effectors,
            target,
            status: TrialStatus {
                state,
                completed: records.iter().filter(|r| r.completed).count(),
                timed_out: records.iter().filter(|r| !r.completed).count(),
                drops: session.monitor().drops,
                flips: session.monitor().flips,
            },
        }
    }
}

/// Offset line from the current effector position to its target.
pub fn offset(target: &WirePose, current: &WirePose) -> [f64; 3] {
    std::array::from_fn(|i| target.position[i] - current.position[i])
}

/// One hand sample from the operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputMessage {
    /// Client timestamp, seconds; must not decrease per hand.
    pub t: f64,
    pub hand: Hand,
    pub pose: WirePose,
    #[serde(default)]
    pub twist: WireTwist,
    /// Clutch button.
    pub button: bool,
}

impl InputMessage {
    pub fn motion(&self) -> Result<MotionState, String> {
        let twist = Twist::new(Vec3::from(self.twist.linear), Vec3::from(self.twist.angular)).map_err(|e| e.to_string())?;
        Ok(MotionState::new(self.pose.to_pose()?, twist))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum ControlMessage {
    Start,
    Stop,
    SetCondition {
        condition: Condition,
    },
    /// Replace the session with a scenario given as TOML text.
    LoadScenario {
        scenario: String,
        #[serde(default)]
        seed: Option<u64>,
    },
    ResetBoxUpright,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ClientFrame {
    Input(InputMessage),
    Control(ControlMessage),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCode {
    Malformed,
    Version,
    Rejected,
    Busy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorFrame {
    pub code: ErrorCode,
    pub message: String,
}

/// Sent when a trial stops or all targets are handled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub records: Vec<TrialRecord>,
    pub all_completed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ServerFrame {
    Snapshot(StateSnapshot),
    Error(ErrorFrame),
    Trial(TrialSummary),
}

impl ServerFrame {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        ServerFrame::Error(ErrorFrame {
            code,
            message: message.into(),
        })
    }
}

fn encode_value<T: Serialize>(frame: &T) -> String {
    let mut value = serde_json::to_value(frame).expect("frames serialize");
    if let Value::Object(map) = &mut value {
        map.insert("v".into(), PROTOCOL_VERSION.into());
    }
    value.to_string()
}

pub fn encode_server(frame: &ServerFrame) -> String {
    encode_value(frame)
}

pub fn encode_client(frame: &ClientFrame) -> String {
    encode_value(frame)
}

fn decode_value<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, ErrorFrame> {
    let err = |code, message: String| ErrorFrame { code, message };
    let value: Value = serde_json::from_str(text).map_err(|e| err(ErrorCode::Malformed, e.to_string()))?;
    match value.get("v").and_then(Value::as_u64) {
        Some(PROTOCOL_VERSION) => {}
        Some(v) => {
            return Err(err(
                ErrorCode::Version,
                format!("protocol version {v} not supported (expected {PROTOCOL_VERSION})"),
            ))
        }
        None => return Err(err(ErrorCode::Version, "missing protocol version field \"v\"".into())),
    }
    serde_json::from_value(value).map_err(|e| err(ErrorCode::Malformed, e.to_string()))
}

/// Unknown fields are ignored; a missing or different `v` is a version error.
pub fn decode_client(text: &str) -> Result<ClientFrame, ErrorFrame> {
    decode_value(text)
}

pub fn decode_server(text: &str) -> Result<ServerFrame, ErrorFrame> {
    decode_value(text)
}

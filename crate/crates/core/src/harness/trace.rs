//! Input traces: timestamped hand samples and session commands, one CSV row
//! each. A trace recorded by a live session replays to the same trial.

use super::HarnessError;
use crate::clutch::Hand;
use crate::geometry::{MotionState, Pose, Twist, Vec3};
use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};
use std::io;
use std::path::Path;

/// Something the operator (or a script) does to the session. Inputs are
/// applied at the start of the next tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SessionInput {
    Hand {
        hand: Hand,
        state: MotionState,
        button: bool,
    },
    /// Drop the clutch for one hand, as when tracking is lost.
    Release { hand: Hand },
    ResetBoxUpright,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceKind {
    Input,
    Release,
    ResetBoxUpright,
    Stop,
}

/// One trace row. Pose and twist columns are zero on rows that are not
/// hand samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// Tick at which the row is applied.
    pub tick: u64,
    /// `tick · dt`, seconds; informational.
    pub t: f64,
    pub kind: TraceKind,
    pub hand: Option<Hand>,
    pub px: f64,
    pub py: f64,
    pub pz: f64,
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub wx: f64,
    pub wy: f64,
    pub wz: f64,
    pub button: bool,
}

impl TraceRow {
    pub fn new(tick: u64, dt: f64, input: &SessionInput) -> Self {
        let mut row = TraceRow {
            tick,
            t: tick as f64 * dt,
            kind: TraceKind::Stop,
            hand: None,
            px: 0.0,
            py: 0.0,
            pz: 0.0,
            qw: 0.0,
            qx: 0.0,
            qy: 0.0,
            qz: 0.0,
            vx: 0.0,
            vy: 0.0,
            vz: 0.0,
            wx: 0.0,
            wy: 0.0,
            wz: 0.0,
            button: false,
        };
        match *input {
            SessionInput::Hand { hand, state, button } => {
                let p = state.pose.position;
                let q = state.pose.rotation.quaternion();
                let (v, w) = (state.twist.linear, state.twist.angular);
                row.kind = TraceKind::Input;
                row.hand = Some(hand);
                (row.px, row.py, row.pz) = (p.x, p.y, p.z);
                (row.qw, row.qx, row.qy, row.qz) = (q.w, q.i, q.j, q.k);
                (row.vx, row.vy, row.vz) = (v.x, v.y, v.z);
                (row.wx, row.wy, row.wz) = (w.x, w.y, w.z);
                row.button = button;
            }
            SessionInput::Release { hand } => {
                row.kind = TraceKind::Release;
                row.hand = Some(hand);
            }
            SessionInput::ResetBoxUpright => row.kind = TraceKind::ResetBoxUpright,
            SessionInput::Stop => row.kind = TraceKind::Stop,
        }
        row
    }

    pub fn input(&self) -> Result<SessionInput, HarnessError> {
        let need_hand = || {
            self.hand
                .ok_or_else(|| HarnessError::Trace(format!("row at tick {} has no hand", self.tick)))
        };
        Ok(match self.kind {
            TraceKind::Input => {
                let q = Quaternion::new(self.qw, self.qx, self.qy, self.qz);
                // Stored quaternions are already unit; keep them bit-exact.
                let rotation = UnitQuaternion::new_unchecked(q);
                let pose = Pose::new(Vec3::new(self.px, self.py, self.pz), rotation)
                    .map_err(|e| HarnessError::Trace(format!("tick {}: {e}", self.tick)))?;
                if (q.norm() - 1.0).abs() > 1e-6 {
                    return Err(HarnessError::Trace(format!("tick {}: quaternion is not unit", self.tick)));
                }
                let twist = Twist::new(Vec3::new(self.vx, self.vy, self.vz), Vec3::new(self.wx, self.wy, self.wz))
                    .map_err(|e| HarnessError::Trace(format!("tick {}: {e}", self.tick)))?;
                SessionInput::Hand {
                    hand: need_hand()?,
                    state: MotionState::new(pose, twist),
                    button: self.button,
                }
            }
            TraceKind::Release => SessionInput::Release { hand: need_hand()? },
            TraceKind::ResetBoxUpright => SessionInput::ResetBoxUpright,
            TraceKind::Stop => SessionInput::Stop,
        })
    }
}

pub fn write_trace<W: io::Write>(rows: &[TraceRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(())
}

pub fn read_trace<R: io::Read>(input: R) -> Result<Vec<TraceRow>, HarnessError> {
    let mut rows = Vec::new();
    for r in csv::Reader::from_reader(input).deserialize() {
        let row: TraceRow = r?;
        if let Some(prev) = rows.last().map(|p: &TraceRow| p.tick) {
            if row.tick < prev {
                return Err(HarnessError::Trace(format!("tick {} after tick {prev}: not monotone", row.tick)));
            }
        }
        row.input()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn save_trace(rows: &[TraceRow], path: &Path) -> Result<(), HarnessError> {
    let f = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_trace(rows, io::BufWriter::new(f))
}

pub fn load_trace(path: &Path) -> Result<Vec<TraceRow>, HarnessError> {
    let f = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_trace(io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::exp;

    fn sample() -> Vec<SessionInput> {
        let pose = Pose::from_parts(Vec3::new(0.1, -0.2, 0.3), exp(&Vec3::new(0.3, -0.1, 0.7)));
        let twist = Twist {
            linear: Vec3::new(0.01, 0.0, -1.0 / 3.0),
            angular: Vec3::new(0.0, 0.2, 0.0),
        };
        vec![
            SessionInput::Hand {
                hand: Hand::Left,
                state: MotionState::new(pose, twist),
                button: true,
            },
            SessionInput::Release { hand: Hand::Right },
            SessionInput::ResetBoxUpright,
            SessionInput::Stop,
        ]
    }

    #[test]
    fn rows_round_trip_bit_exact() {
        let rows: Vec<_> = sample().iter().enumerate().map(|(i, s)| TraceRow::new(i as u64 * 7, 0.001, s)).collect();
        let mut buf = Vec::new();
        write_trace(&rows, &mut buf).unwrap();
        let back = read_trace(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
        let inputs: Vec<_> = back.iter().map(|r| r.input().unwrap()).collect();
        assert_eq!(inputs, sample());
    }

    #[test]
    fn header_names_are_stable() {
        let mut buf = Vec::new();
        write_trace(&[TraceRow::new(0, 0.001, &SessionInput::Stop)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("tick,t,kind,hand,px,py,pz,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz,button\n"));
    }

    #[test]
    fn non_monotone_trace_is_rejected() {
        let rows = vec![
            TraceRow::new(5, 0.001, &SessionInput::Stop),
            TraceRow::new(4, 0.001, &SessionInput::Stop),
        ];
        let mut buf = Vec::new();
        write_trace(&rows, &mut buf).unwrap();
        assert!(matches!(read_trace(buf.as_slice()), Err(HarnessError::Trace(_))));
    }

    #[test]
    fn input_row_without_hand_is_rejected() {
        let mut row = TraceRow::new(0, 0.001, &sample()[0]);
        row.hand = None;
        assert!(row.input().is_err());
        let mut row = TraceRow::new(0, 0.001, &sample()[0]);
        row.qw = 3.0;
        assert!(row.input().is_err());
    }
}

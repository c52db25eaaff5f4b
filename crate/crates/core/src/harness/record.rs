//! Per-target trial records and their CSV form.

use super::HarnessError;
use crate::tasks::TaskType;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io;
use std::path::Path;

/// Whether the operator sees the impedance target. Only logged metadata and
/// the gateway's visualization payload depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Vis,
    Novis,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Vis => "vis",
            Condition::Novis => "novis",
        })
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vis" => Ok(Condition::Vis),
            "novis" => Ok(Condition::Novis),
            _ => Err(format!("unknown condition {s:?} (expected vis or novis)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub agent_id: String,
    pub condition: Condition,
    pub task_type: TaskType,
    pub target_index: usize,
    pub completed: bool,
    /// Seconds from presentation to completion; empty when the target timed
    /// out.
    pub completion_time_s: Option<f64>,
    pub drop_count: u32,
    pub flip_count: u32,
}

pub fn write_records<W: io::Write>(records: &[TrialRecord], out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record([
        "agent_id",
        "condition",
        "task_type",
        "target_index",
        "completed",
        "completion_time_s",
        "drop_count",
        "flip_count",
    ])?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(())
}

pub fn read_records<R: io::Read>(input: R) -> Result<Vec<TrialRecord>, HarnessError> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(HarnessError::from))
        .collect()
}

pub fn export_csv(records: &[TrialRecord], path: &Path) -> Result<(), HarnessError> {
    let f = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_records(records, io::BufWriter::new(f))
}

pub fn import_csv(path: &Path) -> Result<Vec<TrialRecord>, HarnessError> {
    let f = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_records(io::BufReader::new(f))
}

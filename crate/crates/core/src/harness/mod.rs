//! Headless trials: a [`Session`] stepped in lockstep with an operator
//! [`Policy`], producing one [`TrialRecord`] per target.

mod policy;
mod record;
mod scenario;
mod session;
mod trace;

pub use policy::{Policy, PolicyKind, ReplayPolicy, ScriptedParams, ScriptedPolicy};
pub use record::{export_csv, import_csv, read_records, write_records, Condition, TrialRecord};
pub use scenario::{GenerateSpec, ResolvedScenario, ScenarioFile, TrialConfig};
pub use session::{Monitor, Session, AIRBORNE_CLEARANCE, DROP_SLIP, FLIP_TILT};
pub use trace::{load_trace, read_trace, save_trace, write_trace, SessionInput, TraceKind, TraceRow};

use crate::sim::SimError;
use crate::tasks::TaskError;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("i/o: {0}")]
    Io(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("trace: {0}")]
    Trace(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        HarnessError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(_) => HarnessError::Io(e.to_string()),
            _ => HarnessError::Csv(e.to_string()),
        }
    }
}

impl From<crate::impedance::ImpedanceError> for HarnessError {
    fn from(e: crate::impedance::ImpedanceError) -> Self {
        HarnessError::Sim(e.into())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrialOptions {
    /// Keep every applied input so the run can be replayed.
    pub record_trace: bool,
    /// Keep a decimated physics-state log.
    pub state_log: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutput {
    pub records: Vec<TrialRecord>,
    pub all_completed: bool,
    pub ticks: u64,
    pub trace: Option<Vec<TraceRow>>,
    pub state_log: Option<String>,
}

/// Runs `policy` against the scenario until every target is completed or
/// abandoned (or a replayed trace stops the session). Output depends only on
/// the arguments.
pub fn run_trial(
    resolved: &ResolvedScenario,
    policy: &mut dyn Policy,
    condition: Condition,
    seed: u64,
    options: TrialOptions,
) -> Result<TrialOutput, HarnessError> {
    let agent = format!("{}-{seed}", policy.name());
    let mut session = Session::new(resolved, condition, seed, agent)?;
    if options.record_trace {
        session.record_trace();
    }
    let every = resolved.trial.state_log_every;
    let mut log = options.state_log.then(|| format!("{}\n", Session::STATE_HEADER));
    let log_state = |s: &Session, log: &mut Option<String>| {
        if let Some(log) = log.as_mut() {
            if s.tick_count() % every == 0 {
                log.push_str(&s.state_line());
                log.push('\n');
            }
        }
    };
    log_state(&session, &mut log);
    while !session.is_finished() {
        for input in policy.act(&session)? {
            session.queue(input);
        }
        let before = session.tick_count();
        session.tick()?;
        if session.tick_count() != before {
            log_state(&session, &mut log);
        }
    }
    Ok(TrialOutput {
        all_completed: session.all_completed(),
        records: session.records().to_vec(),
        ticks: session.tick_count(),
        trace: options.record_trace.then(|| session.take_trace()),
        state_log: log,
    })
}

/// Builds the named policy. `trace` is required for replay.
pub fn make_policy(
    kind: PolicyKind,
    params: ScriptedParams,
    trace: Option<Vec<TraceRow>>,
) -> Result<Box<dyn Policy>, HarnessError> {
    Ok(match kind {
        PolicyKind::ScriptedLift => Box::new(ScriptedPolicy::new(crate::tasks::TaskType::Lifting, params)),
        PolicyKind::ScriptedSlide => Box::new(ScriptedPolicy::new(crate::tasks::TaskType::Sliding, params)),
        PolicyKind::Replay => Box::new(ReplayPolicy::new(
            trace.ok_or_else(|| HarnessError::Trace("replay needs a trace".into()))?,
        )?),
    })
}

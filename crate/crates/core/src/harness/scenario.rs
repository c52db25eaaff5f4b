//! Scenario files (TOML).

use super::HarnessError;
use crate::geometry::{Aabb, Pose};
use crate::harness::policy::ScriptedParams;
use crate::sim::WorldConfig;
use crate::tasks::{generate_scenario, BoxSpec, Layout, Scenario, TargetSpec, TaskType};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    /// Time allowed per target before it is abandoned, seconds.
    pub timeout_s: f64,
    /// Write one state-log line every this many ticks.
    pub state_log_every: u64,
    /// Reachable region for impedance targets; targets are clamped into it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_workspace: Option<Aabb>,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            timeout_s: 120.0,
            state_log_every: 10,
            target_workspace: None,
        }
    }
}

/// Seeded target generation instead of an explicit target list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub count: usize,
    /// Layout seed; the trial seed is used when absent.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_workspace")]
    pub workspace: Aabb,
}

fn default_workspace() -> Aabb {
    Layout::default().workspace
}

/// On-disk scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub task_type: TaskType,
    #[serde(rename = "box", default)]
    pub box_spec: BoxSpec,
    /// Initial box pose; its height is replaced by the resting height.
    #[serde(default)]
    pub start: Option<Pose>,
    #[serde(default)]
    pub targets: Vec<TargetSpec>,
    #[serde(default)]
    pub generate: Option<GenerateSpec>,
    #[serde(default)]
    pub world: WorldConfig,
    #[serde(default)]
    pub trial: TrialConfig,
    #[serde(default)]
    pub policy: ScriptedParams,
}

/// A scenario file with its targets materialized for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedScenario {
    pub scenario: Scenario,
    pub world: WorldConfig,
    pub trial: TrialConfig,
    pub policy: ScriptedParams,
}

impl ScenarioFile {
    pub fn new(task_type: TaskType, targets: Vec<TargetSpec>) -> Self {
        Self {
            task_type,
            box_spec: BoxSpec::default(),
            start: None,
            targets,
            generate: None,
            world: WorldConfig::default(),
            trial: TrialConfig::default(),
            policy: ScriptedParams::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Scenario(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Scenario(e.to_string()))
    }

    pub fn resolve(&self, seed: u64) -> Result<ResolvedScenario, HarnessError> {
        self.world.validate()?;
        if !(self.trial.timeout_s.is_finite() && self.trial.timeout_s > 0.0) {
            return Err(HarnessError::Scenario(format!("timeout_s must be > 0, got {}", self.trial.timeout_s)));
        }
        if self.trial.target_workspace.is_some_and(|w| !w.is_valid()) {
            return Err(HarnessError::Scenario("target_workspace needs finite min <= max".into()));
        }
        if self.trial.state_log_every == 0 {
            return Err(HarnessError::Scenario("state_log_every must be >= 1".into()));
        }
        let layout = Layout {
            table_height: self.world.table_height,
            box_spec: self.box_spec,
            ..Layout::default()
        };
        let mut start = self.start.unwrap_or_else(|| layout.start_pose());
        start.position.z = self.box_spec.rest_height(self.world.table_height);
        let scenario = match &self.generate {
            Some(g) => {
                if !self.targets.is_empty() {
                    return Err(HarnessError::Scenario("give either targets or [generate], not both".into()));
                }
                let layout = Layout {
                    workspace: g.workspace,
                    start_xy: [start.position.x, start.position.y],
                    ..layout
                };
                let mut s = generate_scenario(self.task_type, g.count, g.seed.unwrap_or(seed), &layout)?;
                s.start = start;
                s
            }
            None => Scenario {
                task_type: self.task_type,
                seed,
                box_spec: self.box_spec,
                start,
                targets: self.targets.clone(),
            },
        };
        scenario.validate()?;
        Ok(ResolvedScenario {
            scenario,
            world: self.world,
            trial: self.trial,
            policy: self.policy,
        })
    }
}

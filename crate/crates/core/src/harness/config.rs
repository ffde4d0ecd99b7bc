use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::perception::DEFAULT_TAU;
use crate::sfl::DEFAULT_LAMBDA;
use crate::simworld::ScenarioId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerceptionKind {
    #[default]
    Heuristic,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    #[default]
    Rules,
    Remote,
}

/// How episode times are measured. `Steps` converts interpreter steps to
/// nominal seconds, so repeated runs report identical times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingMode {
    Wall,
    Steps,
}

impl FromStr for TimingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "wall" => Ok(TimingMode::Wall),
            "steps" => Ok(TimingMode::Steps),
            _ => Err(format!("unknown timing mode '{s}' (wall|steps)")),
        }
    }
}

/// The single `--backend` switch: `heuristic` and `rules` both select
/// the local pair, `remote` sends both agents to the remote service.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendChoice {
    Heuristic,
    Rules,
    Remote,
}

impl FromStr for BackendChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "heuristic" => Ok(BackendChoice::Heuristic),
            "rules" => Ok(BackendChoice::Rules),
            "remote" => Ok(BackendChoice::Remote),
            _ => Err(format!("unknown backend '{s}' (heuristic|rules|remote)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioId,
    pub perception: PerceptionKind,
    pub decision: DecisionKind,
    pub tau: f64,
    pub lambda_edit: f64,
    pub seed: u64,
    /// Case file (JSONL). Generated cases are used when absent.
    pub cases: Option<PathBuf>,
    /// Number of generated cases; the scenario's test-set size when absent.
    pub count: Option<usize>,
    pub parallel: bool,
    pub parallelism: usize,
    pub output: PathBuf,
    /// Defaults to `steps` for local backends and `wall` otherwise.
    pub timing: Option<TimingMode>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: ScenarioId::Port,
            perception: PerceptionKind::Heuristic,
            decision: DecisionKind::Rules,
            tau: DEFAULT_TAU,
            lambda_edit: DEFAULT_LAMBDA,
            seed: 2024,
            cases: None,
            count: None,
            parallel: false,
            parallelism: 1,
            output: PathBuf::from("runs"),
            timing: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(HarnessError::Config(format!("tau {} outside (0, 1)", self.tau)));
        }
        if self.parallelism < 1 {
            return Err(HarnessError::Config("parallelism must be at least 1".into()));
        }
        if !(self.lambda_edit.is_finite() && self.lambda_edit >= 1.0) {
            return Err(HarnessError::Config(format!("lambda_edit {} below 1", self.lambda_edit)));
        }
        if self.count == Some(0) {
            return Err(HarnessError::Config("count must be positive".into()));
        }
        Ok(())
    }

    pub fn set_backend(&mut self, choice: BackendChoice) {
        let remote = choice == BackendChoice::Remote;
        self.perception = if remote { PerceptionKind::Remote } else { PerceptionKind::Heuristic };
        self.decision = if remote { DecisionKind::Remote } else { DecisionKind::Rules };
    }

    pub fn deterministic(&self) -> bool {
        self.perception == PerceptionKind::Heuristic && self.decision == DecisionKind::Rules
    }

    pub fn timing_mode(&self) -> TimingMode {
        self.timing.unwrap_or(if self.deterministic() { TimingMode::Steps } else { TimingMode::Wall })
    }
}

//! End-to-end runs over emergency cases: impact check, perception,
//! decision with validation, commit, and run reports.

mod config;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{BackendChoice, DecisionKind, PerceptionKind, RunConfig, TimingMode};
pub use report::{format_rate, format_time, round_half_up, table_csv, table_text, Table, TASK_LABELS};

use crate::decision::{repair_and_commit, DecisionBackend, ProposalOutcome, RemoteDecisionBackend, RuleBackend};
use crate::jsonl;
use crate::library::{run_plan, FunctionLibrary};
use crate::perception::{aggregate, localize, HeuristicBackend, PerceptionBackend, RemoteBackend};
use crate::remote::{ClientConfig, CompletionService, HttpClient};
use crate::simworld::{check_feasible, generate_cases, CaseCounts, EmergencyCase, ScenarioId};

/// Nominal seconds per interpreter step under step timing.
pub const STEP_SECONDS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no cases to run")]
    NoCases,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("case {id} is a {got} case, run is {expected}")]
    ScenarioMismatch { id: String, expected: ScenarioId, got: ScenarioId },
    #[error("remote backend requested but {0}")]
    Remote(String),
    #[error("cases: {0}")]
    Cases(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Test-set size per scenario.
pub fn corpus_size(scenario: ScenarioId) -> usize {
    match scenario {
        ScenarioId::Port => 199,
        ScenarioId::Warehouse => 398,
        ScenarioId::Deck => 642,
    }
}

/// The backends of one run.
pub struct Backends {
    pub perception: Box<dyn PerceptionBackend>,
    pub decision: Box<dyn DecisionBackend>,
}

impl Backends {
    pub fn deterministic() -> Self {
        Backends { perception: Box::new(HeuristicBackend::default()), decision: Box::new(RuleBackend::builtin()) }
    }

    /// Builds what `cfg` asks for. Remote agents share one client,
    /// configured from the environment.
    pub fn from_config(cfg: &RunConfig) -> Result<Self, HarnessError> {
        let needs_remote = cfg.perception == PerceptionKind::Remote || cfg.decision == DecisionKind::Remote;
        let client: Option<Arc<dyn CompletionService>> = if needs_remote {
            let cc = ClientConfig::from_env()
                .ok_or_else(|| HarnessError::Remote(format!("{} is not set", crate::remote::ENDPOINT_VAR)))?;
            Some(Arc::new(HttpClient::new(cc).map_err(|e| HarnessError::Remote(e.to_string()))?))
        } else {
            None
        };
        Ok(Self::with_client(cfg, client))
    }

    /// Like `from_config`, with `client` standing in for the remote service.
    pub fn with_client(cfg: &RunConfig, client: Option<Arc<dyn CompletionService>>) -> Self {
        let perception: Box<dyn PerceptionBackend> = match (cfg.perception, &client) {
            (PerceptionKind::Remote, Some(c)) => Box::new(RemoteBackend { client: c.clone() }),
            _ => Box::new(HeuristicBackend::default()),
        };
        let decision: Box<dyn DecisionBackend> = match (cfg.decision, &client) {
            (DecisionKind::Remote, Some(c)) => Box::new(RemoteDecisionBackend::new(c.clone())),
            _ => Box::new(RuleBackend::builtin()),
        };
        Backends { perception, decision }
    }

    pub fn method(&self) -> String {
        format!("MAFIG({}+{})", self.perception.label(), self.decision.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub case_id: String,
    pub category: String,
    /// Whether the current library's schedule broke under the emergency.
    pub impactful: bool,
    pub affected: BTreeSet<String>,
    pub proposals: Vec<ProposalOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub perception_time: f64,
    pub decision_time: f64,
    pub total_time: f64,
    pub steps: u64,
    pub success: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub n: usize,
    pub successes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: ScenarioId,
    pub method: String,
    pub n: usize,
    pub successes: usize,
    pub impactful: usize,
    pub total_time: f64,
    pub avg_time: f64,
    pub success_rate: f64,
    pub perception_time: f64,
    pub decision_time: f64,
    pub timing: TimingMode,
    /// Episodes ran against one frozen library snapshot.
    pub parallel: bool,
    pub commits: usize,
    pub per_category: BTreeMap<String, CategoryStats>,
}

impl RunSummary {
    pub fn from_records(
        scenario: ScenarioId,
        method: &str,
        records: &[EpisodeRecord],
        timing: TimingMode,
        parallel: bool,
        commits: usize,
    ) -> Self {
        let n = records.len();
        let successes = records.iter().filter(|r| r.success).count();
        let total_time: f64 = records.iter().map(|r| r.total_time).sum();
        let mut per_category: BTreeMap<String, CategoryStats> = BTreeMap::new();
        for r in records {
            let c = per_category.entry(r.category.clone()).or_default();
            c.n += 1;
            c.successes += usize::from(r.success);
        }
        let ratio = |a: f64| if n == 0 { 0.0 } else { a / n as f64 };
        RunSummary {
            scenario,
            method: method.to_owned(),
            n,
            successes,
            impactful: records.iter().filter(|r| r.impactful).count(),
            total_time,
            avg_time: ratio(total_time),
            success_rate: ratio(successes as f64),
            perception_time: records.iter().map(|r| r.perception_time).sum(),
            decision_time: records.iter().map(|r| r.decision_time).sum(),
            timing,
            parallel,
            commits,
            per_category,
        }
    }
}

struct Clock {
    mode: TimingMode,
    start: Instant,
}

impl Clock {
    fn start(mode: TimingMode) -> Self {
        Clock { mode, start: Instant::now() }
    }

    fn stop(&self, steps: u64) -> f64 {
        match self.mode {
            TimingMode::Wall => self.start.elapsed().as_secs_f64(),
            TimingMode::Steps => steps as f64 * STEP_SECONDS,
        }
    }
}

/// Runs one case against `lib`, committing validated repairs into it.
/// Cases the library already handles succeed without perception or
/// decision work. Failures of any stage become failed episodes.
pub fn run_episode(
    case: &EmergencyCase,
    backends: &Backends,
    tau: f64,
    timing: TimingMode,
    lib: &mut FunctionLibrary,
) -> EpisodeRecord {
    let mut rec = EpisodeRecord {
        case_id: case.id.clone(),
        category: case.category().to_owned(),
        impactful: true,
        affected: BTreeSet::new(),
        proposals: Vec::new(),
        verdict: None,
        error: None,
        perception_time: 0.0,
        decision_time: 0.0,
        total_time: 0.0,
        steps: 0,
        success: false,
    };
    let whole = Clock::start(timing);

    let impact = Clock::start(timing);
    let baseline = run_plan(lib, &case.state);
    let mut steps = baseline.steps;
    let verdict = match (case.truth(), baseline.result) {
        (Ok(truth), Ok(plan)) => check_feasible(&truth, &plan),
        (Err(e), _) => {
            rec.error = Some(e.to_string());
            rec.total_time = whole.stop(steps);
            rec.steps = steps;
            return rec;
        }
        (_, Err(e)) => crate::simworld::Verdict::fail(crate::simworld::Assertion::MalformedDecision, e.to_string()),
    };
    let impact_time = impact.stop(steps);
    if verdict.is_pass() {
        rec.impactful = false;
        rec.success = true;
        rec.verdict = Some(verdict.to_string());
        rec.total_time = impact_time;
        rec.steps = steps;
        return rec;
    }

    let perceive = Clock::start(timing);
    let specs = lib.specs();
    let located = aggregate(&case.emergency, &case.state, &specs)
        .and_then(|z| localize(&z, backends.perception.as_ref(), tau).map(|a| (z, a)));
    // Nominal perception work: every function weighed against every fact.
    let p_steps = (specs.len() * (case.emergency.facts.len() + 1)) as u64;
    rec.perception_time = perceive.stop(p_steps);
    steps += p_steps;
    let (z, aff) = match located {
        Ok(x) => x,
        Err(e) => {
            rec.error = Some(format!("perception: {e}"));
            rec.total_time = impact_time + rec.perception_time;
            rec.steps = steps;
            return rec;
        }
    };
    rec.affected = aff.members.clone();

    let decide = Clock::start(timing);
    match repair_and_commit(case, &z, &aff.members, backends.decision.as_ref(), lib) {
        Ok(out) => {
            steps += out.steps;
            rec.decision_time = decide.stop(out.steps);
            rec.success = out.success;
            rec.verdict = Some(out.verdict.to_string());
            rec.proposals = out.proposals;
        }
        Err(e) => {
            rec.decision_time = decide.stop(0);
            rec.error = Some(format!("decision: {e}"));
        }
    }
    rec.steps = steps;
    rec.total_time = match timing {
        TimingMode::Wall => whole.stop(steps),
        TimingMode::Steps => impact_time + rec.perception_time + rec.decision_time,
    };
    rec
}

/// Runs `cases` in order against `lib`. Sequentially, each episode sees
/// the library as left by the previous ones; in parallel mode every
/// episode starts from the same snapshot, commits are discarded, and the
/// records come back sorted by case id.
pub fn run_suite(
    cases: &[EmergencyCase],
    cfg: &RunConfig,
    backends: &Backends,
    lib: &mut FunctionLibrary,
) -> Result<(Vec<EpisodeRecord>, RunSummary), HarnessError> {
    cfg.validate()?;
    if cases.is_empty() {
        return Err(HarnessError::NoCases);
    }
    if let Some(c) = cases.iter().find(|c| c.scenario() != lib.scenario()) {
        return Err(HarnessError::ScenarioMismatch { id: c.id.clone(), expected: lib.scenario(), got: c.scenario() });
    }
    let timing = cfg.timing_mode();
    let before = lib.history().len();
    let records: Vec<EpisodeRecord> = if cfg.parallel {
        let snapshot = lib.clone();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallelism)
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let mut recs: Vec<EpisodeRecord> = pool.install(|| {
            cases.par_iter().map(|c| run_episode(c, backends, cfg.tau, timing, &mut snapshot.clone())).collect()
        });
        recs.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        recs
    } else {
        cases
            .iter()
            .map(|c| {
                let r = run_episode(c, backends, cfg.tau, timing, lib);
                if !r.success {
                    warn!("{} failed: {}", r.case_id, r.error.as_deref().or(r.verdict.as_deref()).unwrap_or("-"));
                }
                r
            })
            .collect()
    };
    let commits = lib.history().len() - before;
    let summary = RunSummary::from_records(lib.scenario(), &backends.method(), &records, timing, cfg.parallel, commits);
    info!("{}: {}/{} succeeded, {} commits", summary.scenario, summary.successes, summary.n, summary.commits);
    Ok((records, summary))
}

/// Cases named by `cfg`: the case file if given, else a generated corpus.
pub fn load_cases(cfg: &RunConfig) -> Result<Vec<EmergencyCase>, HarnessError> {
    match &cfg.cases {
        Some(path) => jsonl::read(path).map_err(|e| HarnessError::Cases(format!("{}: {e}", path.display()))),
        None => {
            let n = cfg.count.unwrap_or_else(|| corpus_size(cfg.scenario));
            generate_cases(cfg.scenario, cfg.seed, CaseCounts::Total(n)).map_err(|e| HarnessError::Cases(e.to_string()))
        }
    }
}

/// Writes `episodes.jsonl`, `summary.csv`, `summary.txt` and
/// `summary.json` into `dir`.
pub fn write_artifacts(dir: &Path, records: &[EpisodeRecord], summary: &RunSummary) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    jsonl::write(&dir.join("episodes.jsonl"), records)?;
    std::fs::write(dir.join("summary.csv"), table_csv(&[summary], Table::Time))?;
    std::fs::write(dir.join("summary.txt"), table_text(&[summary], Table::Latency))?;
    let json = serde_json::to_string_pretty(summary).map_err(std::io::Error::other)?;
    std::fs::write(dir.join("summary.json"), json + "\n")?;
    Ok(())
}

//! Perception: aggregate the emergency context, score every library
//! function, and threshold the scores into the affected set.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::library::FunctionSpec;
use crate::remote::{CompletionService, RemoteError};
use crate::simworld::{
    fact_impacts, generate_cases, CaseCounts, Emergency, EmergencyCase, Fact, ScenarioId, SimError, SystemState,
};

pub const DEFAULT_TAU: f64 = 0.5;

/// Weight of keyword overlap in the heuristic score.
pub const ALPHA: f64 = 1.0;

/// Weight of the dependency hit in the heuristic score.
pub const BETA: f64 = 2.0;

/// Upper bound on the rendered state digest, in characters.
pub const DIGEST_LIMIT: usize = 4096;

/// Seed of the case corpus behind the localization dataset.
pub const LOCALIZATION_SEED: u64 = 3_001;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerceptionError {
    #[error("scenario mismatch: expected {expected}, got {got}")]
    ScenarioMismatch { expected: ScenarioId, got: ScenarioId },
    #[error("emergency has neither a narrative nor facts")]
    EmptyEmergency,
    #[error("threshold {0} outside (0, 1)")]
    InvalidTau(f64),
    #[error("no functions to score")]
    NoFunctions,
    #[error("backend gave no score for '{0}'")]
    MissingScore(String),
    #[error("score {score} for '{name}' is not a probability")]
    BadScore { name: String, score: f64 },
    #[error("remote backend: {0}")]
    Remote(#[from] RemoteError),
    #[error("unreadable backend reply: {0}")]
    Malformed(String),
    #[error("infinite loss: '{0}' has probability 0 on its own label")]
    InfiniteLoss(String),
    #[error("label for unscored function '{0}'")]
    Unscored(String),
    #[error("label names unknown function '{0}'")]
    UnknownLabel(String),
    #[error("case {0} is impactful but carries no labels")]
    Unlabeled(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("io: {0}")]
    Io(String),
}

/// One emergency fact together with whether it alone breaks the schedule
/// the state currently carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedFact {
    #[serde(flatten)]
    pub fact: Fact,
    pub conflicts: bool,
}

/// Aggregated input `z_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionInput {
    pub scenario: ScenarioId,
    pub narrative: String,
    pub facts: Vec<ObservedFact>,
    pub state_digest: String,
    pub specs: Vec<FunctionSpec>,
}

impl PerceptionInput {
    /// Plain-text rendering used for prompts and dataset records.
    pub fn render(&self) -> String {
        let mut out = format!("scenario: {}\nemergency: {}\nfacts:\n", self.scenario, self.narrative);
        for f in &self.facts {
            let json = serde_json::to_string(&f.fact).unwrap_or_default();
            let mark = if f.conflicts { " [conflicts with current plan]" } else { "" };
            out.push_str(&format!("- {json}{mark}\n"));
        }
        out.push_str("state:\n");
        out.push_str(&self.state_digest);
        out.push_str("\nfunctions:\n");
        for s in &self.specs {
            out.push_str(&format!(
                "- {}: {} (reads: {}; writes: {})\n",
                s.name,
                s.summary,
                join(&s.reads),
                join(&s.writes)
            ));
        }
        out
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.specs.iter().map(|s| s.name.as_str())
    }
}

fn join(set: &BTreeSet<String>) -> String {
    if set.is_empty() {
        "-".into()
    } else {
        set.iter().cloned().collect::<Vec<_>>().join(", ")
    }
}

/// Builds `z_t` from the emergency, the state and the library specs.
pub fn aggregate(e: &Emergency, s: &SystemState, specs: &[FunctionSpec]) -> Result<PerceptionInput, PerceptionError> {
    if e.scenario != s.scenario {
        return Err(PerceptionError::ScenarioMismatch { expected: s.scenario, got: e.scenario });
    }
    if let Some(bad) = specs.iter().find(|f| f.scenario != s.scenario) {
        return Err(PerceptionError::ScenarioMismatch { expected: s.scenario, got: bad.scenario });
    }
    if e.narrative.trim().is_empty() && e.facts.is_empty() {
        return Err(PerceptionError::EmptyEmergency);
    }
    let facts = e
        .facts
        .iter()
        .map(|f| ObservedFact { fact: f.clone(), conflicts: s.plan.as_ref().is_some_and(|p| fact_impacts(s, p, f)) })
        .collect();
    Ok(PerceptionInput {
        scenario: s.scenario,
        narrative: e.narrative.clone(),
        facts,
        state_digest: s.digest(DIGEST_LIMIT),
        specs: specs.to_vec(),
    })
}

/// Scores every function named in the input's specs.
pub trait PerceptionBackend: Send + Sync {
    fn score(&self, z: &PerceptionInput) -> Result<BTreeMap<String, f64>, PerceptionError>;
    fn label(&self) -> String;
}

/// Deterministic reference scorer:
/// `logistic(alpha * overlap + beta * hit)`, where `overlap` is the share of
/// a function's keywords found in the narrative and `hit` is +1 when the
/// function reads or writes a field touched by a conflicting fact, else -1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicBackend {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for HeuristicBackend {
    fn default() -> Self {
        HeuristicBackend { alpha: ALPHA, beta: BETA }
    }
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Lower-case alphabetic words of `text`.
pub fn words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_ascii_alphabetic()).filter(|w| !w.is_empty()).map(str::to_ascii_lowercase).collect()
}

impl PerceptionBackend for HeuristicBackend {
    fn score(&self, z: &PerceptionInput) -> Result<BTreeMap<String, f64>, PerceptionError> {
        let said = words(&z.narrative);
        let touched: BTreeSet<String> =
            z.facts.iter().filter(|f| f.conflicts).map(|f| f.fact.touched_field()).collect();
        Ok(z.specs
            .iter()
            .map(|s| {
                let overlap = if s.keywords.is_empty() {
                    0.0
                } else {
                    s.keywords.iter().filter(|k| said.contains(k.as_str())).count() as f64 / s.keywords.len() as f64
                };
                let hit = if s.reads.iter().chain(&s.writes).any(|f| touched.contains(f)) { 1.0 } else { -1.0 };
                (s.name.clone(), logistic(self.alpha * overlap + self.beta * hit))
            })
            .collect())
    }

    fn label(&self) -> String {
        "heuristic".into()
    }
}

const PERCEPTION_RULES: &str = "You localize scheduling functions affected by an emergency. \
Reply with one JSON object mapping every function name listed below to the probability \
(a number between 0 and 1) that the function must change to handle the emergency. \
Reply with the JSON object only.";

/// Model-backed scorer speaking through a completion service.
pub struct RemoteBackend {
    pub client: Arc<dyn CompletionService>,
}

pub fn perception_prompt(z: &PerceptionInput) -> String {
    format!("{PERCEPTION_RULES}\n\n{}", z.render())
}

/// Parses a `{name: score}` reply; tolerates text around the object.
pub fn parse_scores(reply: &str) -> Result<BTreeMap<String, f64>, PerceptionError> {
    let (Some(a), Some(b)) = (reply.find('{'), reply.rfind('}')) else {
        return Err(PerceptionError::Malformed("no JSON object".into()));
    };
    if b < a {
        return Err(PerceptionError::Malformed("no JSON object".into()));
    }
    let raw: BTreeMap<String, serde_json::Value> =
        serde_json::from_str(&reply[a..=b]).map_err(|e| PerceptionError::Malformed(e.to_string()))?;
    raw.into_iter()
        .map(|(k, v)| match v.as_f64() {
            Some(x) => Ok((k, x)),
            None => Err(PerceptionError::Malformed(format!("score for '{k}' is not a number"))),
        })
        .collect()
}

impl PerceptionBackend for RemoteBackend {
    fn score(&self, z: &PerceptionInput) -> Result<BTreeMap<String, f64>, PerceptionError> {
        let reply = self.client.complete(&perception_prompt(z))?;
        parse_scores(&reply.text)
    }

    fn label(&self) -> String {
        self.client.label()
    }
}

/// Scores, threshold and the functions strictly above it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffectedSet {
    pub scores: BTreeMap<String, f64>,
    pub tau: f64,
    pub members: BTreeSet<String>,
}

impl AffectedSet {
    pub fn from_scores(scores: BTreeMap<String, f64>, tau: f64) -> Result<Self, PerceptionError> {
        check_tau(tau)?;
        for (name, &score) in &scores {
            if !(0.0..=1.0).contains(&score) {
                return Err(PerceptionError::BadScore { name: name.clone(), score });
            }
        }
        let members = scores.iter().filter(|(_, &p)| p > tau).map(|(n, _)| n.clone()).collect();
        Ok(AffectedSet { scores, tau, members })
    }
}

fn check_tau(tau: f64) -> Result<(), PerceptionError> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(PerceptionError::InvalidTau(tau))
    }
}

/// Scores every function of `z` and thresholds at `tau`. Extra names in the
/// backend's reply are dropped; missing ones are an error.
pub fn localize(
    z: &PerceptionInput,
    backend: &dyn PerceptionBackend,
    tau: f64,
) -> Result<AffectedSet, PerceptionError> {
    check_tau(tau)?;
    if z.specs.is_empty() {
        return Err(PerceptionError::NoFunctions);
    }
    let raw = backend.score(z)?;
    let mut scores = BTreeMap::new();
    for name in z.names() {
        let p = *raw.get(name).ok_or_else(|| PerceptionError::MissingScore(name.to_owned()))?;
        scores.insert(name.to_owned(), p);
    }
    AffectedSet::from_scores(scores, tau)
}

/// Which terms the localization loss sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossForm {
    /// `-sum y ln p`: positive labels only.
    #[default]
    PositiveOnly,
    /// Adds `-sum (1 - y) ln (1 - p)`.
    FullBinary,
}

/// Cross-entropy of `scores` against binary `labels`. Every labelled name
/// must be scored.
pub fn localization_loss(
    scores: &BTreeMap<String, f64>,
    labels: &BTreeMap<String, u8>,
    form: LossForm,
) -> Result<f64, PerceptionError> {
    let mut total = 0.0;
    for (name, &y) in labels {
        let p = *scores.get(name).ok_or_else(|| PerceptionError::Unscored(name.clone()))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(PerceptionError::BadScore { name: name.clone(), score: p });
        }
        match (y, form) {
            (1, _) => {
                if p == 0.0 {
                    return Err(PerceptionError::InfiniteLoss(name.clone()));
                }
                total -= p.ln();
            }
            (0, LossForm::FullBinary) => {
                if p == 1.0 {
                    return Err(PerceptionError::InfiniteLoss(name.clone()));
                }
                total -= (1.0 - p).ln();
            }
            (0, LossForm::PositiveOnly) => {}
            (other, _) => return Err(PerceptionError::Malformed(format!("label {other} for '{name}' is not 0 or 1"))),
        }
    }
    Ok(total)
}

/// One line of the localization dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationRecord {
    pub input_text: String,
    pub labels: BTreeMap<String, u8>,
    pub scenario: ScenarioId,
    pub case_id: String,
}

/// Records per scenario in the shipped localization dataset.
pub fn localization_size(scenario: ScenarioId) -> usize {
    match scenario {
        ScenarioId::Port => 30,
        ScenarioId::Warehouse => 50,
        ScenarioId::Deck => 100,
    }
}

/// One record per case: the rendered input and a 0/1 label per function.
pub fn build_localization_dataset(
    cases: &[EmergencyCase],
    specs: &[FunctionSpec],
) -> Result<Vec<LocalizationRecord>, PerceptionError> {
    let names: BTreeSet<&str> = specs.iter().map(|s| s.name.as_str()).collect();
    cases
        .iter()
        .map(|c| {
            if c.impactful && c.affected_labels.is_empty() {
                return Err(PerceptionError::Unlabeled(c.id.clone()));
            }
            if let Some(bad) = c.affected_labels.iter().find(|l| !names.contains(l.as_str())) {
                return Err(PerceptionError::UnknownLabel(bad.clone()));
            }
            let z = aggregate(&c.emergency, &c.state, specs)?;
            Ok(LocalizationRecord {
                input_text: z.render(),
                labels: names.iter().map(|n| (n.to_string(), u8::from(c.affected_labels.contains(*n)))).collect(),
                scenario: c.scenario(),
                case_id: c.id.clone(),
            })
        })
        .collect()
}

/// The shipped dataset for `scenario`, drawn from its own seeded corpus.
pub fn localization_dataset(
    scenario: ScenarioId,
    specs: &[FunctionSpec],
) -> Result<Vec<LocalizationRecord>, PerceptionError> {
    let cases = generate_cases(scenario, LOCALIZATION_SEED, CaseCounts::Total(localization_size(scenario)))?;
    build_localization_dataset(&cases, specs)
}

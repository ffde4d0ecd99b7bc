use std::collections::BTreeSet;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::afdsl::EvalError;
use crate::simworld::{apply_facts, check_feasible, scenario_of, Assertion, Fact, ScenarioId, SystemState, Verdict};

use super::{run_plan, AtomicFunction, FunctionLibrary};

/// A planning situation: the library plans against `view` and the plan is
/// judged by the oracle against `truth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeCase {
    pub label: String,
    pub view: SystemState,
    pub truth: SystemState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ProbeVerdict {
    Pass,
    /// Evaluation raised an error.
    Error {
        error: EvalError,
    },
    /// The returned value does not have the decision shape.
    Malformed {
        detail: String,
    },
    /// The decision violates a feasibility assertion.
    Infeasible {
        verdict: Verdict,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub label: String,
    pub verdict: ProbeVerdict,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub function: String,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected: Option<String>,
    pub outcomes: Vec<ProbeOutcome>,
}

impl VerdictReport {
    pub fn steps(&self) -> u64 {
        self.outcomes.iter().map(|o| o.steps).sum()
    }

    /// One line naming the first failure, or "pass".
    pub fn summary(&self) -> String {
        if let Some(r) = &self.rejected {
            return format!("{}: {r}", self.function);
        }
        for o in &self.outcomes {
            let why = match &o.verdict {
                ProbeVerdict::Pass => continue,
                ProbeVerdict::Error { error } => error.to_string(),
                ProbeVerdict::Malformed { detail } => format!("malformed decision: {detail}"),
                ProbeVerdict::Infeasible { verdict } => verdict.to_string(),
            };
            return format!("{} on probe '{}': {why}", self.function, o.label);
        }
        "pass".into()
    }

    /// First violated oracle assertion, if the failure was a feasibility one.
    pub fn violated(&self) -> Option<Assertion> {
        self.outcomes.iter().find_map(|o| match &o.verdict {
            ProbeVerdict::Infeasible { verdict } => verdict.assertion(),
            _ => None,
        })
    }
}

/// Runs the library with `candidate` substituted on every probe. The
/// verdict passes iff every probe plans without error, returns a decision
/// of the scenario's shape, and that decision satisfies the oracle.
pub fn trial_execute(lib: &FunctionLibrary, candidate: &AtomicFunction, probes: &[ProbeCase]) -> VerdictReport {
    let mut report =
        VerdictReport { function: candidate.name.clone(), pass: false, rejected: None, outcomes: Vec::new() };
    if let Some(cur) = lib.get(&candidate.name) {
        if cur.ast.params != candidate.ast.params || cur.ast.ret != candidate.ast.ret {
            report.rejected = Some("signature differs from the library entry".into());
            return report;
        }
    }
    if probes.is_empty() {
        report.rejected = Some("no probes supplied".into());
        return report;
    }
    let trial = lib.with_candidate(candidate);
    for p in probes {
        let run = run_plan(&trial, &p.view);
        let verdict = match run.result {
            Err(error) => ProbeVerdict::Error { error },
            Ok(decision) => match check_feasible(&p.truth, &decision) {
                Verdict::Pass => ProbeVerdict::Pass,
                Verdict::Fail { assertion: Assertion::MalformedDecision, detail } => ProbeVerdict::Malformed { detail },
                v => ProbeVerdict::Infeasible { verdict: v },
            },
        };
        report.outcomes.push(ProbeOutcome { label: p.label.clone(), verdict, steps: run.steps });
    }
    report.pass = report.outcomes.iter().all(|o| o.verdict == ProbeVerdict::Pass);
    report
}

/// Probe for one function during an episode: plan against the pre-emergency
/// view, judged against the view with only the facts that touch `reads`.
pub fn episode_probe(view: &SystemState, facts: &[Fact], reads: &BTreeSet<String>) -> ProbeCase {
    let relevant: Vec<Fact> = facts.iter().filter(|f| reads.contains(&f.touched_field())).cloned().collect();
    let truth = apply_facts(view, &relevant).unwrap_or_else(|_| view.clone());
    ProbeCase { label: "episode".into(), view: view.clone(), truth }
}

/// Seed of the random variant probe state.
const VARIANT_SEED: u64 = 0x5eed_0001;

/// Seed of the search for an emergency the reference plan survives.
const BENIGN_SEED: u64 = 0x5eed_0002;

/// Scenario probe suite: the reference state, a random variant, and the
/// reference state under an emergency that leaves the plan feasible.
pub fn base_probes(scenario: ScenarioId) -> &'static [ProbeCase] {
    static CACHE: [OnceLock<Vec<ProbeCase>>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let slot = match scenario {
        ScenarioId::Port => &CACHE[0],
        ScenarioId::Warehouse => &CACHE[1],
        ScenarioId::Deck => &CACHE[2],
    };
    slot.get_or_init(|| build_probes(scenario))
}

fn build_probes(scenario: ScenarioId) -> Vec<ProbeCase> {
    let s = scenario_of(scenario);
    let lib = FunctionLibrary::builtin(scenario);
    let base = s.base_state();
    let mut out = vec![ProbeCase { label: "base".into(), view: base.clone(), truth: base.clone() }];

    let mut rng = ChaCha8Rng::seed_from_u64(VARIANT_SEED);
    for _ in 0..200 {
        let v = s.random_state(&mut rng).with_clock(1);
        if let Ok(plan) = run_plan(&lib, &v).result {
            if check_feasible(&v, &plan).is_pass() {
                out.push(ProbeCase { label: "variant".into(), view: v.clone(), truth: v });
                break;
            }
        }
    }

    let mut view = base.clone().with_clock(2);
    let plan = run_plan(&lib, &view).result.expect("reference state plans");
    view.plan = Some(plan.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(BENIGN_SEED);
    'search: for _ in 0..50 {
        for category in s.categories() {
            let Some(facts) = s.sample_facts(category, &view, &mut rng) else { continue };
            let Ok(truth) = apply_facts(&view, &facts) else { continue };
            let ideal = run_plan(&lib, &truth).result;
            if check_feasible(&truth, &plan).is_pass() && ideal.is_ok_and(|d| check_feasible(&truth, &d).is_pass()) {
                out.push(ProbeCase { label: "benign-emergency".into(), view, truth });
                break 'search;
            }
        }
    }
    out
}

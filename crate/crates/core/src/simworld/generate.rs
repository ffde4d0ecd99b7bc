//! Seeded emergency-case generation and the hand-audited golden cases.

use std::collections::BTreeSet;
use std::slice;
use std::sync::OnceLock;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    apply_facts, check_feasible, narrative, scenario_of, Emergency, EmergencyCase, Fact, ScenarioId, SimError,
    SystemState, CASE_SCHEMA_VERSION,
};
use crate::afdsl::Value;
use crate::library::{run_plan, FunctionLibrary};

/// Clock of the first golden case; golden case `j` observes `base + 100 * j`.
pub const GOLDEN_CLOCK_BASE: i64 = 9_000_000_000;

/// Attempts per case before the generator gives up.
const MAX_ATTEMPTS: usize = 500;

/// Probability of aiming a fact at an entity the current plan relies on.
const PLAN_BIAS: f64 = 0.85;

/// Clock of generated case `index` under `seed`. Distinct cases get
/// distinct clocks spaced 100 apart.
pub fn case_clock(seed: u64, index: usize) -> i64 {
    (seed % 100_000) as i64 * 10_000_000 + 100 * (index as i64 + 1)
}

/// How many cases to draw per category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseCounts {
    PerCategory(usize),
    /// Split evenly; the first `n mod c` categories get one extra.
    Total(usize),
    /// One count per category, in category order.
    Histogram(Vec<usize>),
}

impl CaseCounts {
    pub fn split(&self, categories: usize) -> Result<Vec<usize>, SimError> {
        match self {
            CaseCounts::PerCategory(n) => Ok(vec![*n; categories]),
            CaseCounts::Total(n) => {
                Ok((0..categories).map(|i| n / categories + usize::from(i < n % categories)).collect())
            }
            CaseCounts::Histogram(h) if h.len() == categories => Ok(h.clone()),
            CaseCounts::Histogram(h) => {
                Err(SimError::InvalidFact(format!("histogram has {} entries for {categories} categories", h.len())))
            }
        }
    }
}

/// Chooses from `involved` (restricted to `all`) most of the time, else
/// from `all`.
pub(crate) fn pick_biased(involved: &[i64], all: &[i64], rng: &mut ChaCha8Rng) -> Option<i64> {
    let hot: Vec<i64> = involved.iter().copied().filter(|i| all.contains(i)).collect();
    if !hot.is_empty() && rng.random_bool(PLAN_BIAS) {
        hot.choose(rng).copied()
    } else {
        all.choose(rng).copied()
    }
}

pub(crate) fn pristine(scenario: ScenarioId) -> &'static FunctionLibrary {
    static CACHE: [OnceLock<FunctionLibrary>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let slot = match scenario {
        ScenarioId::Port => &CACHE[0],
        ScenarioId::Warehouse => &CACHE[1],
        ScenarioId::Deck => &CACHE[2],
    };
    slot.get_or_init(|| FunctionLibrary::builtin(scenario))
}

/// Whether `fact` alone makes `plan` infeasible on `state`.
pub fn fact_impacts(state: &SystemState, plan: &Value, fact: &Fact) -> bool {
    match apply_facts(state, slice::from_ref(fact)) {
        Ok(t) => !check_feasible(&t, plan).is_pass(),
        Err(_) => false,
    }
}

/// Functions reading a field touched by an individually impactful fact.
pub fn label_case(lib: &FunctionLibrary, state: &SystemState, facts: &[Fact]) -> BTreeSet<String> {
    let plan = match &state.plan {
        Some(p) => p.clone(),
        None => match run_plan(lib, state).result {
            Ok(p) => p,
            Err(_) => return BTreeSet::new(),
        },
    };
    facts.iter().filter(|f| fact_impacts(state, &plan, f)).flat_map(|f| lib.readers(&f.touched_field())).collect()
}

fn case_rng(seed: u64, category: usize, k: usize) -> ChaCha8Rng {
    let mix = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(((category as u64) << 32) | k as u64);
    ChaCha8Rng::seed_from_u64(mix)
}

/// Draws cases for every category of `scenario`. Each case has a feasible
/// pre-emergency plan and a post-emergency state the reference library can
/// solve. Output is a pure function of the arguments.
pub fn generate_cases(scenario: ScenarioId, seed: u64, counts: CaseCounts) -> Result<Vec<EmergencyCase>, SimError> {
    let s = scenario_of(scenario);
    let lib = pristine(scenario);
    let per = counts.split(s.categories().len())?;
    let mut out = Vec::new();
    for (ci, (category, n)) in s.categories().iter().zip(per).enumerate() {
        for k in 0..n {
            let index = out.len();
            let mut rng = case_rng(seed, ci, k);
            let case = draw_case(lib, scenario, category, seed, index, &mut rng).ok_or_else(|| {
                SimError::InvalidFact(format!("no solvable {category} case after {MAX_ATTEMPTS} attempts"))
            })?;
            out.push(case);
        }
    }
    Ok(out)
}

fn draw_case(
    lib: &FunctionLibrary,
    scenario: ScenarioId,
    category: &str,
    seed: u64,
    index: usize,
    rng: &mut ChaCha8Rng,
) -> Option<EmergencyCase> {
    let s = scenario_of(scenario);
    let clock = case_clock(seed, index);
    for _ in 0..MAX_ATTEMPTS {
        let mut state = s.random_state(rng).with_clock(clock);
        let Ok(plan) = run_plan(lib, &state).result else { continue };
        if !s.check_feasible(&state, &plan).is_pass() {
            continue;
        }
        state.plan = Some(plan.clone());
        let Some(facts) = s.sample_facts(category, &state, rng) else { continue };
        if facts.is_empty() {
            continue;
        }
        let Ok(truth) = apply_facts(&state, &facts) else { continue };
        match run_plan(lib, &truth).result {
            Ok(ideal) if s.check_feasible(&truth, &ideal).is_pass() => {}
            _ => continue,
        }
        let impactful = !s.check_feasible(&truth, &plan).is_pass();
        let labels = label_case(lib, &state, &facts);
        if impactful == labels.is_empty() {
            continue;
        }
        let id = format!("{scenario}-s{seed}-{index:04}");
        return Some(EmergencyCase {
            schema_version: CASE_SCHEMA_VERSION,
            id: id.clone(),
            seed,
            golden: false,
            emergency: Emergency {
                id,
                scenario,
                category: category.to_owned(),
                narrative: narrative(&facts, &state),
                facts,
                timestamp: clock,
            },
            state,
            impactful,
            affected_labels: labels,
        });
    }
    None
}

#[derive(Deserialize)]
struct GoldenRecord {
    id: String,
    category: String,
    facts: Vec<Fact>,
    affected_labels: BTreeSet<String>,
}

fn golden_text(scenario: ScenarioId) -> &'static str {
    match scenario {
        ScenarioId::Port => include_str!("../../fixtures/golden/port.jsonl"),
        ScenarioId::Warehouse => include_str!("../../fixtures/golden/warehouse.jsonl"),
        ScenarioId::Deck => include_str!("../../fixtures/golden/deck.jsonl"),
    }
}

/// Hand-written cases over the reference state. The recorded labels are
/// checked against the labelling rule on load.
pub fn golden_cases(scenario: ScenarioId) -> Result<Vec<EmergencyCase>, SimError> {
    let s = scenario_of(scenario);
    let lib = pristine(scenario);
    let mut out = Vec::new();
    for (j, line) in golden_text(scenario).lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let rec: GoldenRecord =
            serde_json::from_str(line).map_err(|e| SimError::Io(format!("golden line {}: {e}", j + 1)))?;
        let clock = GOLDEN_CLOCK_BASE + 100 * j as i64;
        let mut state = s.base_state().with_clock(clock);
        let plan = run_plan(lib, &state)
            .result
            .map_err(|e| SimError::InvalidFact(format!("reference state does not plan: {e}")))?;
        state.plan = Some(plan.clone());
        let truth = apply_facts(&state, &rec.facts)?;
        let labels = label_case(lib, &state, &rec.facts);
        if labels != rec.affected_labels {
            return Err(SimError::InvalidFact(format!(
                "golden case {}: recorded labels {:?}, rule gives {:?}",
                rec.id, rec.affected_labels, labels
            )));
        }
        let impactful = !s.check_feasible(&truth, &plan).is_pass();
        out.push(EmergencyCase {
            schema_version: CASE_SCHEMA_VERSION,
            id: rec.id.clone(),
            seed: 0,
            golden: true,
            emergency: Emergency {
                id: rec.id,
                scenario,
                category: rec.category,
                narrative: narrative(&rec.facts, &state),
                facts: rec.facts,
                timestamp: clock,
            },
            state,
            impactful,
            affected_labels: labels,
        });
    }
    Ok(out)
}

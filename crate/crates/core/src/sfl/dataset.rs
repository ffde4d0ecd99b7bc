//! Distillation records from (context, original, revised) triples.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{diff_span, insert_markers, SflError, Tokenizer};
use crate::afdsl;
use crate::decision::{repair_and_commit, RuleBackend};
use crate::library::FunctionLibrary;
use crate::perception::{aggregate, localize, HeuristicBackend, DEFAULT_TAU};
use crate::simworld::{generate_cases, CaseCounts, ScenarioId};

pub const DISTILL_SCHEMA_VERSION: u32 = 1;

/// Seed of the case corpus behind the distillation dataset.
pub const DISTILL_SEED: u64 = 4_001;

/// Records per scenario in the shipped distillation dataset.
pub fn distill_size(scenario: ScenarioId) -> usize {
    match scenario {
        ScenarioId::Port => 80,
        ScenarioId::Warehouse => 170,
        ScenarioId::Deck => 120,
    }
}

/// One teacher pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillPair {
    pub case_id: String,
    pub scenario: ScenarioId,
    pub category: String,
    pub function: String,
    pub context: String,
    pub original: String,
    pub revised: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillMeta {
    pub scenario: ScenarioId,
    pub category: String,
    pub function: String,
    pub lambda_edit: f64,
    pub tokenizer_id: String,
    pub schema_version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillRecord {
    pub context: String,
    pub original: String,
    pub target_with_markers: String,
    pub meta: DistillMeta,
}

/// One record per pair, in input order. Pairs whose texts tokenize
/// identically are skipped with a warning; the count of skipped pairs is
/// returned alongside.
pub fn build_distill_dataset(
    pairs: &[DistillPair],
    tokenizer: &dyn Tokenizer,
    lambda_edit: f64,
) -> Result<(Vec<DistillRecord>, usize), SflError> {
    let built: Vec<Result<Option<DistillRecord>, SflError>> = pairs
        .par_iter()
        .map(|p| {
            afdsl::parse_unresolved(&p.revised)
                .map_err(|e| SflError::Unparseable(format!("{} {}: {e}", p.case_id, p.function)))?;
            let f = tokenizer.tokenize(&p.original);
            let fstar = tokenizer.seq(&p.revised);
            let span = match diff_span(&f, &fstar.tokens) {
                Ok(s) => s,
                Err(SflError::Identical) => {
                    warn!("skipping {} {}: revision is identical", p.case_id, p.function);
                    return Ok(None);
                }
                Err(e) => return Err(e),
            };
            let y = insert_markers(&fstar, span)?;
            Ok(Some(DistillRecord {
                context: p.context.clone(),
                original: p.original.clone(),
                target_with_markers: tokenizer.detokenize(&y.y.tokens),
                meta: DistillMeta {
                    scenario: p.scenario,
                    category: p.category.clone(),
                    function: p.function.clone(),
                    lambda_edit,
                    tokenizer_id: tokenizer.id().to_owned(),
                    schema_version: DISTILL_SCHEMA_VERSION,
                },
            }))
        })
        .collect();
    let mut out = Vec::new();
    let mut skipped = 0;
    for r in built {
        match r? {
            Some(rec) => out.push(rec),
            None => skipped += 1,
        }
    }
    Ok((out, skipped))
}

/// Teacher pairs from rule-backend repairs over a seeded corpus, each
/// case repaired against the shipped library. Sorted by case id, then
/// function name.
pub fn distill_pairs(scenario: ScenarioId, seed: u64, cases: usize) -> Result<Vec<DistillPair>, SflError> {
    let corpus =
        generate_cases(scenario, seed, CaseCounts::Total(cases)).map_err(|e| SflError::Pipeline(e.to_string()))?;
    let rules = RuleBackend::builtin();
    let base = FunctionLibrary::builtin(scenario);
    let specs = base.specs();
    let mut pairs: Vec<DistillPair> = corpus
        .par_iter()
        .filter(|c| c.impactful)
        .map(|c| -> Result<Vec<DistillPair>, SflError> {
            let z = aggregate(&c.emergency, &c.state, &specs).map_err(|e| SflError::Pipeline(e.to_string()))?;
            let aff = localize(&z, &HeuristicBackend::default(), DEFAULT_TAU)
                .map_err(|e| SflError::Pipeline(e.to_string()))?
                .members;
            if aff.is_empty() {
                return Ok(Vec::new());
            }
            let mut lib = base.clone();
            let out =
                repair_and_commit(c, &z, &aff, &rules, &mut lib).map_err(|e| SflError::Pipeline(e.to_string()))?;
            let context = z.render();
            Ok(out
                .proposals
                .into_iter()
                .filter(|p| p.passed)
                .filter_map(|p| {
                    Some(DistillPair {
                        case_id: c.id.clone(),
                        scenario,
                        category: c.category().to_owned(),
                        function: p.function,
                        context: context.clone(),
                        original: p.original?,
                        revised: p.proposal?,
                    })
                })
                .collect())
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    pairs.sort_by(|a, b| (&a.case_id, &a.function).cmp(&(&b.case_id, &b.function)));
    Ok(pairs)
}

/// The shipped dataset for `scenario`: pairs from a corpus twice the
/// target size, truncated to the target.
pub fn distill_dataset(
    scenario: ScenarioId,
    tokenizer: &dyn Tokenizer,
    lambda_edit: f64,
) -> Result<Vec<DistillRecord>, SflError> {
    let want = distill_size(scenario);
    let pairs = distill_pairs(scenario, DISTILL_SEED, 2 * want)?;
    let (mut recs, _) = build_distill_dataset(&pairs, tokenizer, lambda_edit)?;
    if recs.len() < want {
        return Err(SflError::Pipeline(format!("{scenario}: only {} records for a target of {want}", recs.len())));
    }
    recs.truncate(want);
    Ok(recs)
}

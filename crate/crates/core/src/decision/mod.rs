//! Emergency decision: propose revised functions for the affected set,
//! validate them by trial execution and commit the ones that pass.

mod rules;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::afdsl::{self, Origin, SourceText};
use crate::library::{
    base_probes, episode_probe, run_plan, trial_execute, AtomicFunction, CommitOutcome, FunctionLibrary,
};
use crate::perception::PerceptionInput;
use crate::remote::{CompletionService, RemoteError};
use crate::simworld::{check_feasible, Assertion, EmergencyCase, Verdict};

pub use rules::{Rewrite, RuleBackend, RuleTemplate, ENTRY_WINDOW};

/// Retries after a failed validation, deterministic backend.
pub const RULE_RETRIES: u32 = 0;

/// Retries after a failed validation, model backend.
pub const REMOTE_RETRIES: u32 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecisionError {
    #[error("no template for {function}: {detail}")]
    NoTemplate { function: String, detail: String },
    #[error("bad template data: {0}")]
    Template(String),
    #[error("remote backend: {0}")]
    Remote(#[from] RemoteError),
    #[error("proposal does not parse: {0}")]
    Unparseable(String),
    #[error("proposal renames '{expected}' to '{got}'")]
    Renamed { expected: String, got: String },
    #[error("proposal for a new function reuses the library name '{0}'")]
    NotNew(String),
    #[error("affected set is empty")]
    EmptyAffectedSet,
    #[error("'{0}' is not in the library")]
    UnknownFunction(String),
    #[error("no capability gap: '{0}' is already written by the library")]
    NoCapabilityGap(String),
}

/// What a request asks the backend to produce.
#[derive(Debug, Clone, PartialEq)]
pub enum RepairTarget {
    /// A revision of this library entry.
    Revise(AtomicFunction),
    /// A new function writing a decision field nothing in the library writes.
    New { field: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairRequest {
    pub input: PerceptionInput,
    pub target: RepairTarget,
    /// Observation time of the emergency.
    pub clock: i64,
    /// Validation errors of earlier attempts, oldest first.
    pub feedback: Vec<String>,
}

impl RepairRequest {
    pub fn revise(input: PerceptionInput, target: AtomicFunction, clock: i64) -> Self {
        RepairRequest { input, target: RepairTarget::Revise(target), clock, feedback: Vec::new() }
    }

    /// Edit-boundary note handed to the backend.
    pub fn constraint(&self) -> String {
        match &self.target {
            RepairTarget::Revise(f) => {
                format!("Only the function `{}` may change. Keep its name, parameters and return type.", f.name)
            }
            RepairTarget::New { field } => format!(
                "Write one new function that produces the decision field `{field}`. Do not redefine library functions."
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairProposal {
    pub revised_source: SourceText,
    pub rationale: String,
    pub backend: String,
}

pub trait DecisionBackend: Send + Sync {
    fn propose(&self, req: &RepairRequest) -> Result<RepairProposal, DecisionError>;
    /// Extra attempts after a proposal fails validation.
    fn retries(&self) -> u32;
    fn label(&self) -> String;
}

/// Asks `backend` for a proposal and checks it parses and keeps the
/// target's name. The returned text is canonical.
pub fn propose(req: &RepairRequest, backend: &dyn DecisionBackend) -> Result<RepairProposal, DecisionError> {
    let mut p = backend.propose(req)?;
    let ast = afdsl::parse_unresolved(&p.revised_source.text).map_err(|e| DecisionError::Unparseable(e.to_string()))?;
    if let RepairTarget::Revise(f) = &req.target {
        if ast.name != f.name {
            return Err(DecisionError::Renamed { expected: f.name.clone(), got: ast.name });
        }
    }
    p.revised_source = afdsl::canonical(&ast, p.revised_source.origin);
    Ok(p)
}

const DECISION_RULES: &str = "You repair scheduling functions written in a small typed DSL. \
Return the complete text of exactly one function inside a ```afdsl code block. \
The function must handle the emergency below while keeping every other behaviour.";

/// Pulls function text out of a model reply: the first fenced block if
/// any, else everything from the first doc comment or `fn`.
pub fn extract_function(reply: &str) -> Option<String> {
    if let Some(start) = reply.find("```") {
        let body = &reply[start + 3..];
        let body = body.split_once('\n').map_or("", |(_, rest)| rest);
        let end = body.find("```").unwrap_or(body.len());
        let code = body[..end].trim();
        return (!code.is_empty()).then(|| format!("{code}\n"));
    }
    let at = [reply.find("///"), reply.find("fn ")].into_iter().flatten().min()?;
    Some(format!("{}\n", reply[at..].trim()))
}

pub fn decision_prompt(req: &RepairRequest) -> String {
    let mut out = format!("{DECISION_RULES}\n{}\n\n{}\n", req.constraint(), req.input.render());
    match &req.target {
        RepairTarget::Revise(f) => {
            out.push_str(&format!("current function:\n```afdsl\n{}```\n", f.source.text));
        }
        RepairTarget::New { field } => out.push_str(&format!("missing decision field: {field}\n")),
    }
    for (i, fb) in req.feedback.iter().enumerate() {
        out.push_str(&format!("attempt {} failed validation: {fb}\n", i + 1));
    }
    out
}

/// Model-backed decision agent.
pub struct RemoteDecisionBackend {
    pub client: Arc<dyn CompletionService>,
    pub retries: u32,
}

impl RemoteDecisionBackend {
    pub fn new(client: Arc<dyn CompletionService>) -> Self {
        RemoteDecisionBackend { client, retries: REMOTE_RETRIES }
    }
}

impl DecisionBackend for RemoteDecisionBackend {
    fn propose(&self, req: &RepairRequest) -> Result<RepairProposal, DecisionError> {
        let reply = self.client.complete(&decision_prompt(req))?;
        let text = extract_function(&reply.text)
            .ok_or_else(|| DecisionError::Unparseable("reply holds no function".into()))?;
        Ok(RepairProposal {
            revised_source: SourceText::new(text, Origin::Generated),
            rationale: "model proposal".into(),
            backend: self.label(),
        })
    }

    fn retries(&self) -> u32 {
        self.retries
    }

    fn label(&self) -> String {
        self.client.label()
    }
}

/// How one affected function fared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalOutcome {
    pub function: String,
    pub attempts: u32,
    pub passed: bool,
    /// `inserted`, `revised:<version>` or `unchanged`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub committed: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Library text before the episode; absent for new functions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub original: Option<String>,
    /// Canonical text of the last proposal, if any parsed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proposal: Option<String>,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub success: bool,
    pub proposals: Vec<ProposalOutcome>,
    /// Oracle verdict of the post-repair schedule on the post-emergency state.
    pub verdict: Verdict,
    pub steps: u64,
}

fn commit_label(c: CommitOutcome) -> String {
    match c {
        CommitOutcome::Inserted => "inserted".into(),
        CommitOutcome::Revised(v) => format!("revised:{v}"),
        CommitOutcome::Unchanged => "unchanged".into(),
    }
}

/// Proposes, validates and commits one candidate, retrying per the backend.
fn repair_one(
    req: &mut RepairRequest,
    case: &EmergencyCase,
    backend: &dyn DecisionBackend,
    lib: &mut FunctionLibrary,
    name: &str,
    handled: &mut BTreeSet<String>,
) -> ProposalOutcome {
    let mut out = ProposalOutcome {
        function: name.to_owned(),
        attempts: 0,
        passed: false,
        committed: None,
        error: None,
        original: lib.get(name).map(|f| f.source.text.clone()),
        proposal: None,
        steps: 0,
    };
    while out.attempts <= backend.retries() {
        out.attempts += 1;
        let cand = propose(req, backend).and_then(|p| {
            lib.prepare(&p.revised_source.text, p.revised_source.origin)
                .map_err(|e| DecisionError::Unparseable(e.to_string()))
        });
        let cand = match cand {
            Ok(c) => c,
            Err(e) => {
                req.feedback.push(e.to_string());
                out.error = Some(e.to_string());
                continue;
            }
        };
        if matches!(req.target, RepairTarget::New { .. }) && lib.get(&cand.name).is_some() {
            let e = DecisionError::NotNew(cand.name.clone());
            req.feedback.push(e.to_string());
            out.error = Some(e.to_string());
            continue;
        }
        out.proposal = Some(cand.source.text.clone());
        let mut probes = base_probes(lib.scenario()).to_vec();
        // Functions committed earlier in the episode already see their facts.
        let reads: BTreeSet<String> = handled.union(&cand.spec.reads).cloned().collect();
        probes.push(episode_probe(&case.state, &case.emergency.facts, &reads));
        let verdict = trial_execute(lib, &cand, &probes);
        out.steps += verdict.steps();
        if !verdict.pass {
            let msg = verdict.summary();
            req.feedback.push(msg.clone());
            out.error = Some(msg);
            continue;
        }
        match lib.commit(&cand, &verdict, case.emergency.timestamp, &backend.label()) {
            Ok(c) => {
                *handled = reads;
                out.passed = true;
                out.committed = Some(commit_label(c));
                out.error = None;
            }
            Err(e) => out.error = Some(e.to_string()),
        }
        break;
    }
    out
}

/// Repairs every function of `affected` in name order. Success requires
/// every proposal to pass and the post-repair schedule, planned on the
/// case's pre-emergency view, to satisfy the oracle on the post-emergency
/// state. Only validated candidates reach the library.
pub fn repair_and_commit(
    case: &EmergencyCase,
    input: &PerceptionInput,
    affected: &BTreeSet<String>,
    backend: &dyn DecisionBackend,
    lib: &mut FunctionLibrary,
) -> Result<EpisodeOutcome, DecisionError> {
    if affected.is_empty() {
        return Err(DecisionError::EmptyAffectedSet);
    }
    let mut proposals = Vec::new();
    let mut handled = BTreeSet::new();
    for name in affected {
        let Some(target) = lib.get(name).cloned() else {
            proposals.push(ProposalOutcome {
                function: name.clone(),
                attempts: 0,
                passed: false,
                committed: None,
                error: Some(DecisionError::UnknownFunction(name.clone()).to_string()),
                original: None,
                proposal: None,
                steps: 0,
            });
            continue;
        };
        let mut req = RepairRequest::revise(input.clone(), target, case.emergency.timestamp);
        proposals.push(repair_one(&mut req, case, backend, lib, name, &mut handled));
    }
    Ok(finish(case, lib, proposals))
}

fn finish(case: &EmergencyCase, lib: &FunctionLibrary, proposals: Vec<ProposalOutcome>) -> EpisodeOutcome {
    let run = run_plan(lib, &case.state);
    let verdict = match (case.truth(), run.result) {
        (Ok(truth), Ok(decision)) => check_feasible(&truth, &decision),
        (Err(e), _) => Verdict::fail(Assertion::MalformedDecision, e.to_string()),
        (_, Err(e)) => Verdict::fail(Assertion::MalformedDecision, e.to_string()),
    };
    let steps = run.steps + proposals.iter().map(|p| p.steps).sum::<u64>();
    EpisodeOutcome { success: proposals.iter().all(|p| p.passed) && verdict.is_pass(), proposals, verdict, steps }
}

/// Whether no library function writes the decision field `field`.
pub fn capability_gap(lib: &FunctionLibrary, field: &str) -> bool {
    lib.functions().all(|f| !f.spec.writes.contains(field))
}

/// Asks for a brand-new function producing `field`. Allowed only when the
/// library has a capability gap for that field.
pub fn repair_with_new_function(
    case: &EmergencyCase,
    input: &PerceptionInput,
    field: &str,
    backend: &dyn DecisionBackend,
    lib: &mut FunctionLibrary,
) -> Result<EpisodeOutcome, DecisionError> {
    if !capability_gap(lib, field) {
        return Err(DecisionError::NoCapabilityGap(field.to_owned()));
    }
    let mut req = RepairRequest {
        input: input.clone(),
        target: RepairTarget::New { field: field.to_owned() },
        clock: case.emergency.timestamp,
        feedback: Vec::new(),
    };
    let outcome = repair_one(&mut req, case, backend, lib, field, &mut BTreeSet::new());
    Ok(finish(case, lib, vec![outcome]))
}

#[cfg(test)]
mod tests;

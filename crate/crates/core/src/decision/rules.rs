//! Deterministic rule-template backend.
//!
//! Every repairable (category, function) pair maps to a rewrite that adds
//! entries to one top-level list literal of the function. Entries hold the
//! fact's parameters plus the window `[clock, clock + ENTRY_WINDOW)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DecisionBackend, DecisionError, RepairProposal, RepairRequest, RepairTarget, RULE_RETRIES};
use crate::afdsl::{self, Expr, Origin, SourceText, Value};
use crate::simworld::{Fact, ScenarioId};

/// Lifetime of a rule-backend entry, in clock units.
pub const ENTRY_WINDOW: i64 = 60;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rewrite {
    ExcludeId,
    OverrideCell,
    OverrideValue,
    AddZone,
    AppendRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleTemplate {
    pub scenario: ScenarioId,
    pub category: String,
    pub function: String,
    pub rewrite: Rewrite,
    /// Name of the top-level `let` list the entries join.
    pub literal: String,
    /// Entry field -> fact parameter. `"*"` spreads a record parameter.
    pub fields: BTreeMap<String, String>,
    /// Fact parameters that must hold these plain JSON values.
    #[serde(default)]
    pub when: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleBackend {
    templates: Vec<RuleTemplate>,
}

const BUILTIN: &str = include_str!("../../fixtures/templates.jsonl");

fn plain(v: &Value) -> serde_json::Value {
    match v {
        Value::Int(n) => (*n).into(),
        Value::Real(x) => (*x).into(),
        Value::Bool(b) => (*b).into(),
        Value::Text(s) | Value::Ident(s) => s.clone().into(),
        Value::Coord(x, y) => serde_json::json!([x, y]),
        Value::List(items) => items.iter().map(plain).collect(),
        Value::Record(m) => m.iter().map(|(k, v)| (k.clone(), plain(v))).collect(),
    }
}

impl Rewrite {
    pub fn as_str(&self) -> &'static str {
        match self {
            Rewrite::ExcludeId => "exclude_id",
            Rewrite::OverrideCell => "override_cell",
            Rewrite::OverrideValue => "override_value",
            Rewrite::AddZone => "add_zone",
            Rewrite::AppendRecord => "append_record",
        }
    }
}

impl RuleBackend {
    pub fn builtin() -> Self {
        RuleBackend::from_jsonl(BUILTIN).expect("shipped templates parse")
    }

    pub fn from_jsonl(text: &str) -> Result<Self, DecisionError> {
        let templates = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| DecisionError::Template(format!("line {}: {e}", i + 1))))
            .collect::<Result<Vec<RuleTemplate>, _>>()?;
        Ok(RuleBackend { templates })
    }

    pub fn templates(&self) -> &[RuleTemplate] {
        &self.templates
    }

    pub fn lookup(&self, scenario: ScenarioId, category: &str, function: &str) -> Option<&RuleTemplate> {
        self.templates.iter().find(|t| t.scenario == scenario && t.category == category && t.function == function)
    }

    fn entry(&self, t: &RuleTemplate, fact: &Fact, clock: i64) -> Result<Expr, String> {
        let Value::Record(params) = fact.params() else { unreachable!("fact parameters are a record") };
        for (path, want) in &t.when {
            let got = params.get(path).map(plain);
            if got.as_ref() != Some(want) {
                return Err(format!("fact has {path} = {got:?}, template needs {want}"));
            }
        }
        let mut rec = BTreeMap::new();
        for (field, path) in &t.fields {
            let v = params.get(path).ok_or_else(|| format!("fact lacks parameter '{path}'"))?;
            match (field.as_str(), v) {
                ("*", Value::Record(inner)) => rec.extend(inner.clone()),
                ("*", _) => return Err(format!("parameter '{path}' is not a record")),
                _ => {
                    rec.insert(field.clone(), v.clone());
                }
            }
        }
        rec.insert("since".into(), Value::Int(clock));
        rec.insert("until".into(), Value::Int(clock + ENTRY_WINDOW));
        Ok(afdsl::literal(&Value::Record(rec)))
    }
}

impl DecisionBackend for RuleBackend {
    fn propose(&self, req: &RepairRequest) -> Result<RepairProposal, DecisionError> {
        let RepairTarget::Revise(target) = &req.target else {
            return Err(DecisionError::NoTemplate {
                function: "<new>".into(),
                detail: "rule templates only revise existing functions".into(),
            });
        };
        let no_template = |detail: String| DecisionError::NoTemplate { function: target.name.clone(), detail };
        let relevant: Vec<&Fact> = req
            .input
            .facts
            .iter()
            .map(|f| &f.fact)
            .filter(|f| target.spec.reads.contains(&f.touched_field()))
            .collect();
        if relevant.is_empty() {
            return Err(no_template("no emergency fact touches what it reads".into()));
        }
        let mut literal: Option<&str> = None;
        let mut fresh = Vec::new();
        let mut kinds = Vec::new();
        for fact in relevant {
            let t = self
                .lookup(req.input.scenario, &fact.category, &target.name)
                .ok_or_else(|| no_template(format!("category '{}'", fact.category)))?;
            match literal {
                Some(l) if l != t.literal => {
                    return Err(DecisionError::Template(format!("{} uses both '{l}' and '{}'", target.name, t.literal)))
                }
                _ => literal = Some(&t.literal),
            }
            fresh.push(self.entry(t, fact, req.clock).map_err(no_template)?);
            kinds.push(t.rewrite.as_str());
        }
        let literal = literal.expect("at least one template matched");
        let mut ast = (*target.ast).clone();
        let Some(Expr::List(items)) = ast.top_level_let_mut(literal) else {
            return Err(no_template(format!("no top-level list literal '{literal}'")));
        };
        // Newest first: the hook returns the first matching entry.
        let mut merged: Vec<Expr> = Vec::new();
        for e in fresh.into_iter().rev() {
            if !items.contains(&e) && !merged.contains(&e) {
                merged.push(e);
            }
        }
        let added = merged.len();
        merged.append(items);
        *items = merged;
        kinds.dedup();
        Ok(RepairProposal {
            revised_source: SourceText::new(afdsl::pretty_print(&ast), Origin::Edited),
            rationale: format!(
                "{} {added} entr{} to `{literal}` for [{}, {})",
                kinds.join("+"),
                if added == 1 { "y" } else { "ies" },
                req.clock,
                req.clock + ENTRY_WINDOW
            ),
            backend: self.label(),
        })
    }

    fn retries(&self) -> u32 {
        RULE_RETRIES
    }

    fn label(&self) -> String {
        "rules".into()
    }
}

use std::collections::BTreeMap;

use super::*;
use crate::afdsl::Value;
use crate::library::FunctionLibrary;
use crate::perception::{aggregate, localize, HeuristicBackend, DEFAULT_TAU};
use crate::remote::StubClient;
use crate::simworld::{generate_cases, golden_cases, scenario_of, CaseCounts, Cell, ScenarioId};

fn fig7() -> EmergencyCase {
    golden_cases(ScenarioId::Deck).unwrap().remove(0)
}

fn input(case: &EmergencyCase, lib: &FunctionLibrary) -> PerceptionInput {
    aggregate(&case.emergency, &case.state, &lib.specs()).unwrap()
}

fn affected(z: &PerceptionInput) -> BTreeSet<String> {
    localize(z, &HeuristicBackend::default(), DEFAULT_TAU).unwrap().members
}

/// Entries of the top-level list `name` in `src`.
fn literal_entries(lib: &FunctionLibrary, src: &str, name: &str) -> Vec<Expr> {
    let ast = lib.prepare(src, Origin::Edited).unwrap().ast;
    match ast.top_level_let(name) {
        Some(Expr::List(items)) => items.clone(),
        other => panic!("{other:?}"),
    }
}

use crate::afdsl::Expr;

fn id_of(e: &Expr) -> i64 {
    let Expr::Record(fields) = e else { panic!("{e:?}") };
    match fields.iter().find(|(k, _)| k == "id").map(|(_, v)| v) {
        Some(Expr::Int(n)) => *n,
        other => panic!("{other:?}"),
    }
}

#[test]
fn templates_are_total_over_observed_pairs() {
    let rules = RuleBackend::builtin();
    for sc in ScenarioId::ALL {
        let lib = FunctionLibrary::builtin(sc);
        for cat in scenario_of(sc).categories() {
            assert!(rules.templates().iter().any(|t| t.scenario == sc && t.category == *cat), "{sc} {cat}");
        }
        for t in rules.templates().iter().filter(|t| t.scenario == sc) {
            let f = lib.get(&t.function).unwrap_or_else(|| panic!("{}", t.function));
            assert!(matches!(f.ast.top_level_let(&t.literal), Some(Expr::List(_))), "{}", t.function);
        }
        let mut cases = golden_cases(sc).unwrap();
        cases.extend(generate_cases(sc, 11, CaseCounts::PerCategory(4)).unwrap());
        for c in &cases {
            for fact in &c.emergency.facts {
                for reader in lib.readers(&fact.touched_field()) {
                    assert!(rules.lookup(sc, &fact.category, &reader).is_some(), "{} {reader}", c.id);
                }
            }
        }
    }
}

#[test]
fn fig7_exclusion_literal_gets_failed_vehicles() {
    let lib = FunctionLibrary::builtin(ScenarioId::Deck);
    let case = fig7();
    let z = input(&case, &lib);
    let req = RepairRequest::revise(z, lib.get("vehicle_usable").unwrap().clone(), case.emergency.timestamp);
    let p = propose(&req, &RuleBackend::builtin()).unwrap();
    let entries = literal_entries(&lib, &p.revised_source.text, "excluded");
    let ids: BTreeSet<i64> = entries.iter().map(id_of).collect();
    assert_eq!(ids, BTreeSet::from([3, 5]));
    let t = case.emergency.timestamp;
    assert!(p.revised_source.text.contains(&format!("since: {t}, until: {}", t + ENTRY_WINDOW)));
    assert_eq!(p.backend, "rules");
    let again = propose(&req, &RuleBackend::builtin()).unwrap();
    assert_eq!(p, again);
}

#[test]
fn rule_backend_refuses_unrelated_functions() {
    let lib = FunctionLibrary::builtin(ScenarioId::Deck);
    let case = fig7();
    let req = RepairRequest::revise(input(&case, &lib), lib.get("plan").unwrap().clone(), 1);
    assert!(matches!(propose(&req, &RuleBackend::builtin()), Err(DecisionError::NoTemplate { .. })));
}

#[test]
fn fig7_repair_succeeds_end_to_end() {
    let mut lib = FunctionLibrary::builtin(ScenarioId::Deck);
    let before = lib.clone();
    let case = fig7();
    let z = input(&case, &lib);
    let aff = affected(&z);
    let out = repair_and_commit(&case, &z, &aff, &RuleBackend::builtin(), &mut lib).unwrap();
    assert!(out.success, "{out:#?}");
    assert_eq!(out.proposals.len(), 3);
    assert!(out.proposals.iter().all(|p| p.passed && p.committed.as_deref() == Some("revised:2")));
    assert_eq!(lib.history().len(), before.history().len() + 3);

    // edit boundary
    for f in before.functions() {
        let now = lib.get(&f.name).unwrap();
        assert_eq!(aff.contains(&f.name), now.source != f.source, "{}", f.name);
    }

    let truth = case.truth().unwrap();
    let plan = run_plan(&lib, &case.state).result.unwrap();
    assert!(check_feasible(&truth, &plan).is_pass());
    let blocked: BTreeSet<Cell> = (8..=9).flat_map(|x| (5..=6).map(move |y| (x, y))).collect();
    let Value::Record(top) = &plan else { panic!() };
    let Some(Value::List(assigns)) = top.get("assignments") else { panic!() };
    for a in assigns {
        let vehicle = a.field("vehicle").and_then(Value::as_int).unwrap();
        assert!(vehicle != 5 && vehicle != 3, "failed vehicle {vehicle} assigned");
        let Some(Value::List(route)) = a.field("route") else { panic!() };
        let cells: Vec<Cell> = route.iter().map(|c| c.as_coord().unwrap()).collect();
        assert!(cells.iter().all(|c| !blocked.contains(c)), "{cells:?}");
        if vehicle == 2 {
            assert_eq!(cells[0], (0, 1));
        }
    }
}

#[test]
fn empty_affected_set_is_a_precondition_error() {
    let mut lib = FunctionLibrary::builtin(ScenarioId::Deck);
    let case = fig7();
    let z = input(&case, &lib);
    assert_eq!(
        repair_and_commit(&case, &z, &BTreeSet::new(), &RuleBackend::builtin(), &mut lib),
        Err(DecisionError::EmptyAffectedSet)
    );
}

#[test]
fn failing_proposal_leaves_library_unchanged_after_retries() {
    let mut lib = FunctionLibrary::builtin(ScenarioId::Deck);
    let before = lib.clone();
    let case = fig7();
    let z = input(&case, &lib);
    // Reply keeps routing through the hazard: valid text, wrong behaviour.
    let stale = lib
        .get("hazard_cells")
        .unwrap()
        .source
        .text
        .replace("let zones = []", "let zones = [{lo: (0, 0), hi: (0, 0), since: 0, until: 0}]");
    let client = Arc::new(StubClient::always(format!("```afdsl\n{stale}```")));
    let backend = RemoteDecisionBackend::new(client.clone());
    let aff = BTreeSet::from(["hazard_cells".to_owned()]);
    let out = repair_and_commit(&case, &z, &aff, &backend, &mut lib).unwrap();
    assert!(!out.success);
    assert_eq!(out.proposals[0].attempts, 1 + REMOTE_RETRIES);
    assert!(out.proposals[0].error.as_deref().unwrap().contains("blocked-cell"));
    assert_eq!(lib.history(), before.history());
    let prompts = client.prompts();
    assert_eq!(prompts.len(), 3);
    assert!(prompts[2].contains("attempt 2 failed validation"));
}

#[test]
fn remote_proposal_is_validated_then_committed() {
    let mut lib = FunctionLibrary::builtin(ScenarioId::Deck);
    let case = fig7();
    let z = input(&case, &lib);
    let good = propose(
        &RepairRequest::revise(z.clone(), lib.get("hazard_cells").unwrap().clone(), case.emergency.timestamp),
        &RuleBackend::builtin(),
    )
    .unwrap();
    let client = Arc::new(StubClient::new([
        Err(RemoteError::Timeout(std::time::Duration::from_secs(60))),
        Ok(format!("Sure.\n```afdsl\n{}```\n", good.revised_source.text)),
    ]));
    let backend = RemoteDecisionBackend::new(client);
    let aff = BTreeSet::from(["hazard_cells".to_owned()]);
    let out = repair_and_commit(&case, &z, &aff, &backend, &mut lib).unwrap();
    assert!(out.proposals[0].passed, "{out:#?}");
    assert_eq!(out.proposals[0].attempts, 2);
    assert_eq!(lib.history().last().unwrap().provenance, "stub");
    // other facts are still unhandled
    assert!(!out.success);
}

#[test]
fn renamed_proposals_are_rejected() {
    let lib = FunctionLibrary::builtin(ScenarioId::Deck);
    let case = fig7();
    let req = RepairRequest::revise(input(&case, &lib), lib.get("vehicle_range").unwrap().clone(), 1);
    let backend =
        RemoteDecisionBackend::new(Arc::new(StubClient::always("fn other_range(v: int) -> int {\n    return 1\n}\n")));
    assert!(matches!(propose(&req, &backend), Err(DecisionError::Renamed { .. })));
    let junk = RemoteDecisionBackend::new(Arc::new(StubClient::always("I cannot help with that.")));
    assert!(matches!(propose(&req, &junk), Err(DecisionError::Unparseable(_))));
}

#[test]
fn function_extraction() {
    assert_eq!(
        extract_function("x\n```afdsl\nfn a() -> int {\n    return 1\n}\n```\ny").unwrap(),
        "fn a() -> int {\n    return 1\n}\n"
    );
    assert_eq!(extract_function("here: /// doc\nfn a() -> int {\n}").unwrap(), "/// doc\nfn a() -> int {\n}\n");
    assert!(extract_function("nothing").is_none());
}

#[test]
fn new_functions_only_fill_capability_gaps() {
    let mut lib = FunctionLibrary::builtin(ScenarioId::Deck);
    let case = fig7();
    let z = input(&case, &lib);
    let backend = RemoteDecisionBackend::new(Arc::new(StubClient::always(
        "/// Free-text note attached to the plan.\nfn plan_note() -> text {\n    return \"rerouted\"\n}\n",
    )));
    assert!(!capability_gap(&lib, "assignments"));
    assert_eq!(
        repair_with_new_function(&case, &z, "assignments", &backend, &mut lib),
        Err(DecisionError::NoCapabilityGap("assignments".into()))
    );
    assert!(capability_gap(&lib, "note"));
    let out = repair_with_new_function(&case, &z, "note", &backend, &mut lib).unwrap();
    assert_eq!(out.proposals[0].committed.as_deref(), Some("inserted"));
    assert_eq!(lib.len(), 26);
    // rules never invent functions
    let mut lib2 = FunctionLibrary::builtin(ScenarioId::Deck);
    let out = repair_with_new_function(&case, &z, "note", &RuleBackend::builtin(), &mut lib2).unwrap();
    assert!(!out.proposals[0].passed);
}

#[test]
fn golden_cases_all_repair_with_rules() {
    for sc in ScenarioId::ALL {
        let mut lib = FunctionLibrary::builtin(sc);
        let mut per: BTreeMap<bool, usize> = BTreeMap::new();
        for case in golden_cases(sc).unwrap() {
            let z = input(&case, &lib);
            let aff = affected(&z);
            if aff.is_empty() {
                continue;
            }
            let out = repair_and_commit(&case, &z, &aff, &RuleBackend::builtin(), &mut lib).unwrap();
            assert!(out.success, "{} {:?}", case.id, out);
            *per.entry(out.success).or_default() += 1;
        }
        assert!(per[&true] >= 8, "{sc}: {per:?}");
    }
}

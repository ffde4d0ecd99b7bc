use super::*;
use crate::afdsl::{self, Value};
use crate::library::{run_plan, FunctionLibrary};

fn deck() -> SystemState {
    scenario_of(ScenarioId::Deck).base_state()
}

fn unavailable(entity: &str, id: i64) -> Fact {
    Fact::new("equipment_failure", Change::Unavailable { entity: entity.into(), id })
}

fn planned(state: SystemState) -> SystemState {
    let lib = FunctionLibrary::builtin(state.scenario);
    let plan = run_plan(&lib, &state).result.expect("plans");
    SystemState { plan: Some(plan), ..state }
}

fn deck_emergency() -> Vec<Fact> {
    vec![
        Fact::new("vehicle_reposition", Change::Relocated { entity: "vehicles".into(), id: 2, cell: (0, 1) }),
        unavailable("vehicles", 5),
        unavailable("vehicles", 3),
        Fact::new("explosion", Change::Blocked { layer: "hazards".into(), lo: (8, 5), hi: (9, 6) }),
    ]
}

#[test]
fn reference_plans_are_feasible() {
    for sc in ScenarioId::ALL {
        let s = planned(scenario_of(sc).base_state());
        assert_eq!(check_feasible(&s, s.plan.as_ref().unwrap()), Verdict::Pass, "{sc}");
    }
}

#[test]
fn deck_reference_plan_routes_vehicle_five_through_the_blast_area() {
    let s = planned(deck());
    let plan = s.plan.unwrap();
    let first = &plan.field("assignments").unwrap().as_list().unwrap()[0];
    assert_eq!(first.field("task"), Some(&Value::Int(2)));
    assert_eq!(first.field("vehicle"), Some(&Value::Int(5)));
    let route: Vec<Cell> =
        first.field("route").unwrap().as_list().unwrap().iter().map(|c| c.as_coord().unwrap()).collect();
    assert_eq!(route, vec![(6, 6), (7, 6), (8, 6), (9, 6), (9, 7)]);
}

#[test]
fn apply_emergency_updates_a_copy() {
    let s = deck();
    let before = s.clone();
    let t = apply_facts(&s, &deck_emergency()).unwrap();
    assert_eq!(s, before);
    assert_eq!(t.cell("vehicles", 2, "cell"), Some((0, 1)));
    assert_eq!(t.flag("vehicles", 5, "available"), Some(false));
    assert_eq!(t.flag("vehicles", 3, "available"), Some(false));
    assert_eq!(t.layer("hazards"), &[Rect::new((8, 5), (9, 6))]);
    assert!(t.blocked(&["hazards"]).contains(&(9, 6)));
}

#[test]
fn emergency_narrative_reads_naturally() {
    let s = deck();
    assert_eq!(
        narrative(&deck_emergency(), &s),
        "Hydraulic vehicle No. 2 is adjusted to (0,1). \
         Maintenance vehicle No. 5 becomes unavailable due to failures. \
         Oxygen supply vehicle No. 3 becomes unavailable due to failures. \
         An explosion occurs in the grid region spanning (8,5) to (9,6)."
    );
}

#[test]
fn dangling_entity_is_rejected() {
    let err = apply_facts(&deck(), &[unavailable("vehicles", 99)]).unwrap_err();
    assert_eq!(err, SimError::DanglingEntity { entity: "vehicles".into(), id: 99 });
}

#[test]
fn invalid_facts_are_rejected() {
    let s = deck();
    let occupied =
        Fact::new("vehicle_reposition", Change::Relocated { entity: "vehicles".into(), id: 2, cell: (1, 10) });
    assert_eq!(apply_facts(&s, &[occupied]), Err(SimError::Occupied((1, 10))));
    let off = Fact::new("explosion", Change::Blocked { layer: "hazards".into(), lo: (11, 11), hi: (12, 12) });
    assert!(matches!(apply_facts(&s, &[off]), Err(SimError::OffGrid(_))));
    let wrong_type = Fact::new(
        "battery_depletion",
        Change::ValueChanged { entity: "vehicles".into(), id: 1, field: "range".into(), value: Value::Bool(true) },
    );
    assert!(matches!(apply_facts(&s, &[wrong_type]), Err(SimError::InvalidFact(_))));
    let no_layer = Fact::new("explosion", Change::Blocked { layer: "lava".into(), lo: (0, 0), hi: (0, 0) });
    assert!(matches!(apply_facts(&s, &[no_layer]), Err(SimError::UnknownField(_))));
    let dup = Fact::new(
        "urgent_task",
        Change::Added { entity: "tasks".into(), record: [("id".to_owned(), Value::Int(1))].into_iter().collect() },
    );
    assert!(matches!(apply_facts(&s, &[dup]), Err(SimError::InvalidFact(_))));
}

#[test]
fn emergency_scenario_must_match() {
    let e = Emergency {
        id: "x".into(),
        scenario: ScenarioId::Port,
        category: "vessel_delay".into(),
        narrative: String::new(),
        facts: vec![],
        timestamp: 0,
    };
    assert!(matches!(apply_emergency(&deck(), &e), Err(SimError::ScenarioMismatch { .. })));
}

#[test]
fn stale_plan_fails_with_named_assertions() {
    let s = planned(deck());
    let plan = s.plan.clone().unwrap();
    let t = apply_facts(&s, &[unavailable("vehicles", 5)]).unwrap();
    assert_eq!(check_feasible(&t, &plan).assertion(), Some(Assertion::UnavailableResource));
    let blast = &deck_emergency()[3..];
    let t = apply_facts(&s, blast).unwrap();
    assert_eq!(check_feasible(&t, &plan).assertion(), Some(Assertion::BlockedCell));
    let t = apply_facts(&s, &deck_emergency()[..1]).unwrap();
    assert_eq!(check_feasible(&t, &plan).assertion(), Some(Assertion::RouteStart));
}

#[test]
fn malformed_decisions_are_reported() {
    for sc in ScenarioId::ALL {
        let s = scenario_of(sc).base_state();
        for bad in [Value::Int(3), Value::record([("assignments", Value::Int(1))])] {
            assert_eq!(check_feasible(&s, &bad).assertion(), Some(Assertion::MalformedDecision), "{sc}");
        }
    }
}

#[test]
fn empty_decision_leaves_tasks_unserved() {
    let empty = |k: &str| Value::record([(k, Value::List(vec![]))]);
    let cases =
        [(ScenarioId::Port, "schedule"), (ScenarioId::Warehouse, "assignments"), (ScenarioId::Deck, "assignments")];
    for (sc, key) in cases {
        let s = scenario_of(sc).base_state();
        assert_eq!(check_feasible(&s, &empty(key)).assertion(), Some(Assertion::UnservedTask));
    }
}

#[test]
fn port_oracle_detects_overlap_and_short_handling() {
    let s = scenario_of(ScenarioId::Port).base_state();
    let slot = |v: i64, b: i64, start: i64, end: i64, cranes: &[i64]| {
        Value::record([
            ("vessel", Value::Int(v)),
            ("berth", Value::Int(b)),
            ("start", Value::Int(start)),
            ("end", Value::Int(end)),
            ("cranes", Value::List(cranes.iter().map(|c| Value::Int(*c)).collect())),
        ])
    };
    let sched = |entries: Vec<Value>| Value::record([("schedule", Value::List(entries))]);
    let overlap = sched(vec![slot(1, 1, 0, 12, &[1, 2]), slot(4, 1, 10, 20, &[1, 2])]);
    assert_eq!(check_feasible(&s, &overlap).assertion(), Some(Assertion::BerthDoubleBooked));
    let short = sched(vec![slot(1, 1, 0, 12, &[1])]);
    assert_eq!(check_feasible(&s, &short).assertion(), Some(Assertion::HandlingTooShort));
    let wrong_crane = sched(vec![slot(1, 1, 0, 12, &[3, 4])]);
    assert_eq!(check_feasible(&s, &wrong_crane).assertion(), Some(Assertion::UnavailableResource));
    let early = sched(vec![slot(2, 2, 0, 18, &[3, 4])]);
    assert_eq!(check_feasible(&s, &early).assertion(), Some(Assertion::StartBeforeArrival));
    let narrow = sched(vec![slot(8, 1, 30, 52, &[1, 2])]);
    assert_eq!(check_feasible(&s, &narrow).assertion(), Some(Assertion::BerthTooShort));
}

#[test]
fn warehouse_route_must_visit_pickup() {
    let s = scenario_of(ScenarioId::Warehouse).base_state();
    let route: Vec<Value> =
        [(6, 0), (6, 1), (6, 2), (5, 2), (5, 3), (5, 4)].iter().map(|c| Value::Coord(c.0, c.1)).collect();
    let d = Value::record([(
        "assignments",
        Value::List(vec![Value::record([
            ("order", Value::Int(2)),
            ("robot", Value::Int(3)),
            ("slot", Value::Int(1)),
            ("route", Value::List(route)),
        ])]),
    )]);
    assert_eq!(check_feasible(&s, &d).assertion(), Some(Assertion::MissedPickup));
}

#[test]
fn host_capabilities_read_the_state() {
    let s = Arc::new(apply_facts(&deck(), &deck_emergency()).unwrap());
    let caps = host_capabilities(s);
    let ns = caps.namespace();
    let src = "fn f() -> record {\n    return {cell: read_vehicle_cell(2), ok: read_vehicle_available(5), zones: read_hazards()}\n}";
    let ast = afdsl::parse(src, &ns).unwrap();
    let v = afdsl::evaluate(&ast, vec![], &caps, afdsl::DEFAULT_STEP_BUDGET).unwrap();
    assert_eq!(v.field("cell"), Some(&Value::Coord(0, 1)));
    assert_eq!(v.field("ok"), Some(&Value::Bool(false)));
    assert_eq!(v.field("zones").unwrap().as_list().unwrap().len(), 1);
    let bad = afdsl::parse("fn g() -> coord {\n    return read_vehicle_cell(99)\n}", &ns).unwrap();
    assert!(afdsl::evaluate(&bad, vec![], &caps, afdsl::DEFAULT_STEP_BUDGET).is_err());
}

#[test]
fn every_fact_field_has_exactly_one_reader() {
    for sc in ScenarioId::ALL {
        let lib = FunctionLibrary::builtin(sc);
        for c in golden_cases(sc).unwrap() {
            for f in &c.emergency.facts {
                assert_eq!(lib.readers(&f.touched_field()).len(), 1, "{}", f.touched_field());
            }
        }
    }
}

#[test]
fn case_counts_split() {
    assert_eq!(CaseCounts::Total(30).split(5).unwrap(), vec![6; 5]);
    assert_eq!(CaseCounts::Total(50).split(8).unwrap(), vec![7, 7, 6, 6, 6, 6, 6, 6]);
    assert_eq!(CaseCounts::Total(100).split(15).unwrap().iter().sum::<usize>(), 100);
    assert_eq!(CaseCounts::PerCategory(2).split(3).unwrap(), vec![2, 2, 2]);
    assert!(CaseCounts::Histogram(vec![1, 2]).split(3).is_err());
}

#[test]
fn case_clocks_are_spaced() {
    assert_eq!(case_clock(7, 0), 70_000_100);
    assert_eq!(case_clock(7, 1) - case_clock(7, 0), 100);
    assert_eq!(case_clock(100_007, 0), case_clock(7, 0));
}

#[test]
fn generation_is_deterministic() {
    let a = generate_cases(ScenarioId::Deck, 11, CaseCounts::PerCategory(1)).unwrap();
    let b = generate_cases(ScenarioId::Deck, 11, CaseCounts::PerCategory(1)).unwrap();
    let c = generate_cases(ScenarioId::Deck, 12, CaseCounts::PerCategory(1)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn generated_cases_are_well_formed() {
    for sc in ScenarioId::ALL {
        let lib = FunctionLibrary::builtin(sc);
        let cases = generate_cases(sc, 3, CaseCounts::PerCategory(2)).unwrap();
        assert_eq!(cases.len(), 2 * scenario_of(sc).categories().len());
        let mut clocks = BTreeSet::new();
        for c in &cases {
            assert!(clocks.insert(c.state.clock));
            assert_eq!(c.impactful, !c.affected_labels.is_empty(), "{}", c.id);
            let plan = c.state.plan.as_ref().unwrap();
            assert!(check_feasible(&c.state, plan).is_pass());
            let truth = c.truth().unwrap();
            assert_eq!(c.impactful, !check_feasible(&truth, plan).is_pass());
            let ideal = run_plan(&lib, &truth).result.unwrap();
            assert!(check_feasible(&truth, &ideal).is_pass(), "{}", c.id);
            assert!(c.emergency.facts.iter().all(|f| f.category == c.emergency.category));
        }
    }
}

#[test]
fn cases_round_trip_through_json() {
    let cases = generate_cases(ScenarioId::Warehouse, 5, CaseCounts::PerCategory(1)).unwrap();
    for c in cases {
        let text = serde_json::to_string(&c).unwrap();
        let back: EmergencyCase = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}

#[test]
fn golden_cases_load() {
    for sc in ScenarioId::ALL {
        let cases = golden_cases(sc).unwrap();
        assert!(cases.len() >= 10, "{sc}");
        assert!(cases.iter().all(|c| c.golden && c.state.clock >= GOLDEN_CLOCK_BASE));
    }
    let deck = golden_cases(ScenarioId::Deck).unwrap();
    let labels: Vec<&str> = deck[0].affected_labels.iter().map(String::as_str).collect();
    assert_eq!(labels, ["hazard_cells", "vehicle_position", "vehicle_usable"]);
}

#[test]
fn state_digest_is_bounded() {
    let s = deck();
    let d = s.digest(80);
    assert!(d.chars().count() <= 80);
    assert!(d.ends_with("..."));
    assert!(s.digest(100_000).contains("vehicles#2"));
}

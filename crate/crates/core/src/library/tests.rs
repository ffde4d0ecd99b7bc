use proptest::prelude::*;

use super::*;
use crate::afdsl::EvalErrorKind;
use crate::simworld::{apply_facts, scenario_of, Assertion, Change, Fact};

fn deck() -> FunctionLibrary {
    FunctionLibrary::builtin(ScenarioId::Deck)
}

fn passing(name: &str) -> VerdictReport {
    VerdictReport { function: name.into(), pass: true, rejected: None, outcomes: vec![] }
}

const RANGE_V2: &str = "/// Remaining travel range of a support vehicle, in grid steps.
fn vehicle_range(v: int) -> int {
    let adjusted = [{id: 1, value: 3, since: 500, until: 560}]
    let now = read_clock()
    for e in adjusted {
        if e.id == v and e.since <= now and now < e.until {
            return e.value
        }
    }
    return read_vehicle_range(v)
}
";

#[test]
fn builtin_libraries_have_expected_sizes() {
    let sizes: Vec<usize> = ScenarioId::ALL.iter().map(|s| FunctionLibrary::builtin(*s).len()).collect();
    assert_eq!(sizes, [8, 15, 25]);
    for sc in ScenarioId::ALL {
        let lib = FunctionLibrary::builtin(sc);
        assert!(lib.get(ENTRY_POINT).is_some());
        assert!(lib.history().iter().all(|h| h.version == 1));
        assert!(lib.functions().all(|f| !f.spec.keywords.is_empty()));
    }
}

#[test]
fn spec_reads_match_bodies() {
    let lib = deck();
    let f = lib.get("vehicle_usable").unwrap();
    assert_eq!(f.spec.reads, BTreeSet::from(["vehicles.available".to_owned()]));
    assert_eq!(lib.readers("hazards"), ["hazard_cells"]);
    assert!(lib.get("plan").unwrap().spec.writes.contains("assignments"));
}

#[test]
fn save_and_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let lib = deck();
    lib.save(dir.path()).unwrap();
    let back = load_library(ScenarioId::Deck, dir.path()).unwrap();
    assert_eq!(back.len(), 25);
    assert_eq!(back.specs(), lib.specs());
    assert_eq!(back.history(), lib.history());
}

#[test]
fn empty_directory_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_library(ScenarioId::Port, dir.path()), Err(LibraryError::Empty(_))));
}

#[test]
fn spec_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    deck().save(dir.path()).unwrap();
    let specs = fs::read_to_string(dir.path().join("specs.jsonl")).unwrap();
    fs::write(dir.path().join("specs.jsonl"), specs.replace("\"vehicles.available\"", "\"vehicles.range\"")).unwrap();
    let err = load_library(ScenarioId::Deck, dir.path()).unwrap_err();
    assert!(matches!(err, LibraryError::Spec { .. }), "{err}");
}

#[test]
fn call_cycles_are_rejected() {
    let lib = deck();
    let cand = lib
        .prepare(
            "fn kind_matches(v: record, t: record) -> bool {\n    return len(candidates(t, [v], [])) > 0\n}\n",
            Origin::Edited,
        )
        .unwrap();
    let mut lib2 = lib.clone();
    assert!(matches!(lib2.commit(&cand, &passing("kind_matches"), 1, "test"), Err(LibraryError::Cycle(_))));
    assert_eq!(lib2.len(), lib.len());
}

#[test]
fn commit_versions_and_history() {
    let mut lib = deck();
    let cand = lib.prepare(RANGE_V2, Origin::Generated).unwrap();
    assert_eq!(cand.version, 0);
    let verdict = trial_execute(&lib, &cand, base_probes(ScenarioId::Deck));
    assert!(verdict.pass, "{}", verdict.summary());
    assert_eq!(lib.commit(&cand, &verdict, 10, "rules").unwrap(), CommitOutcome::Revised(2));
    assert_eq!(lib.commit(&cand, &verdict, 11, "rules").unwrap(), CommitOutcome::Unchanged);
    assert_eq!(lib.get("vehicle_range").unwrap().version, 2);
    let last = lib.history().last().unwrap();
    assert_eq!((last.version, last.timestamp, last.provenance.as_str()), (2, 10, "rules"));

    let dir = tempfile::tempdir().unwrap();
    lib.save(dir.path()).unwrap();
    let back = load_library(ScenarioId::Deck, dir.path()).unwrap();
    assert_eq!(back.get("vehicle_range").unwrap().version, 2);
    assert_eq!(back.replay_sources(), lib.replay_sources());
}

#[test]
fn failing_verdict_blocks_commit() {
    let mut lib = deck();
    let cand = lib.prepare(RANGE_V2, Origin::Generated).unwrap();
    let mut v = passing("vehicle_range");
    v.pass = false;
    assert!(matches!(lib.commit(&cand, &v, 1, "x"), Err(LibraryError::Rejected(_))));
    assert_eq!(lib.get("vehicle_range").unwrap().version, 1);
}

#[test]
fn new_functions_are_inserted() {
    let mut lib = deck();
    let cand = lib
        .prepare(
            "/// Manhattan distance between two cells.\nfn cell_gap(a: coord, b: coord) -> int {\n    return manhattan(a, b)\n}\n",
            Origin::Generated,
        )
        .unwrap();
    assert_eq!(cand.spec.summary, "Manhattan distance between two cells.");
    let v = trial_execute(&lib, &cand, base_probes(ScenarioId::Deck));
    assert!(v.pass);
    assert_eq!(lib.commit(&cand, &v, 1, "remote").unwrap(), CommitOutcome::Inserted);
    assert_eq!(lib.len(), 26);
}

#[test]
fn trial_catches_a_route_through_obstacles() {
    let lib = deck();
    let cand = lib
        .prepare(
            "fn blocked_cells() -> list[coord] {\n    return concat(concat(hazard_cells(), closed_lane_cells()), jet_blast_cells())\n}\n",
            Origin::Generated,
        )
        .unwrap();
    let v = trial_execute(&lib, &cand, base_probes(ScenarioId::Deck));
    assert!(!v.pass);
    assert_eq!(v.violated(), Some(Assertion::BlockedCell));
    assert!(v.summary().contains("blocked-cell"), "{}", v.summary());
}

#[test]
fn trial_catches_runtime_errors() {
    let lib = deck();
    let cand = lib
        .prepare(
            "fn travel_estimate(v: record, t: record) -> int {\n    return manhattan(v.cell, t.cell) / 0\n}\n",
            Origin::Generated,
        )
        .unwrap();
    let v = trial_execute(&lib, &cand, base_probes(ScenarioId::Deck));
    assert!(!v.pass);
    assert!(matches!(
        &v.outcomes[0].verdict,
        ProbeVerdict::Error { error } if error.kind == EvalErrorKind::Arithmetic
    ));
}

#[test]
fn trial_rejects_signature_changes() {
    let lib = deck();
    let cand = lib.prepare("fn travel_estimate(v: record) -> int {\n    return 0\n}\n", Origin::Generated).unwrap();
    let v = trial_execute(&lib, &cand, base_probes(ScenarioId::Deck));
    assert!(!v.pass);
    assert!(v.rejected.is_some());
    let ok = lib.prepare(RANGE_V2, Origin::Generated).unwrap();
    assert!(trial_execute(&lib, &ok, &[]).rejected.is_some());
}

#[test]
fn probe_suite_covers_three_situations() {
    for sc in ScenarioId::ALL {
        let labels: Vec<String> = base_probes(sc).iter().map(|p| p.label.clone()).collect();
        assert_eq!(labels, ["base", "variant", "benign-emergency"], "{sc}");
        let lib = FunctionLibrary::builtin(sc);
        for p in base_probes(sc) {
            let plan = run_plan(&lib, &p.view).result.unwrap();
            assert!(crate::simworld::check_feasible(&p.truth, &plan).is_pass(), "{sc} {}", p.label);
        }
    }
}

#[test]
fn episode_probe_keeps_only_relevant_facts() {
    let view = scenario_of(ScenarioId::Deck).base_state();
    let facts = vec![
        Fact::new("equipment_failure", Change::Unavailable { entity: "vehicles".into(), id: 5 }),
        Fact::new("explosion", Change::Blocked { layer: "hazards".into(), lo: (8, 5), hi: (9, 6) }),
    ];
    let p = episode_probe(&view, &facts, &BTreeSet::from(["hazards".to_owned()]));
    assert_eq!(p.truth, apply_facts(&view, &facts[1..]).unwrap());
    assert_eq!(p.view, view);
}

#[test]
fn planning_rejects_foreign_state() {
    let lib = deck();
    let port = scenario_of(ScenarioId::Port).base_state();
    assert!(run_plan(&lib, &port).result.is_err());
}

fn range_variant(k: i64) -> String {
    RANGE_V2.replace("value: 3", &format!("value: {k}"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Any commit sequence leaves versions equal to the number of distinct
    /// consecutive sources, and replaying the history gives the final text.
    #[test]
    fn commit_sequences_keep_history_consistent(seq in proptest::collection::vec(0i64..4, 1..8)) {
        let mut lib = deck();
        let mut expected = 1u32;
        let mut last: Option<i64> = None;
        for (t, k) in seq.iter().enumerate() {
            let cand = lib.prepare(&range_variant(*k), Origin::Generated).unwrap();
            let out = lib.commit(&cand, &passing("vehicle_range"), t as i64, "prop").unwrap();
            if last == Some(*k) {
                prop_assert_eq!(out, CommitOutcome::Unchanged);
            } else {
                expected += 1;
                prop_assert_eq!(out, CommitOutcome::Revised(expected));
            }
            last = Some(*k);
        }
        let f = lib.get("vehicle_range").unwrap();
        prop_assert_eq!(f.version, expected);
        let replay = lib.replay_sources();
        prop_assert_eq!(&replay["vehicle_range"].1, &f.source.text);
        let versions: Vec<u32> = lib
            .history()
            .iter()
            .filter(|h| h.name == "vehicle_range")
            .map(|h| h.version)
            .collect();
        prop_assert!(versions.windows(2).all(|w| w[1] == w[0] + 1));
    }
}

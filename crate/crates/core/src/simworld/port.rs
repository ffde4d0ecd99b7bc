//! Berth allocation: vessels are given a berth, a crane group and a time
//! slot inside the berth's working window. Times are in hours.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::generate::pick_biased;
use super::{
    int_field, list_field, Assertion, Change, Fact, FieldKind, Scenario, ScenarioId, Schema, SystemState, TableSchema,
    Verdict,
};
use crate::afdsl::Value;

pub struct Port;

/// Last working hour of every berth in a fresh state.
const BERTH_CLOSE: i64 = 240;

static SCHEMA: Schema = Schema {
    tables: &[
        TableSchema {
            name: "berths",
            singular: "berth",
            fields: &[
                ("length", FieldKind::Int),
                ("open", FieldKind::Int),
                ("close", FieldKind::Int),
                ("available", FieldKind::Bool),
            ],
            exclusive_cells: false,
        },
        TableSchema {
            name: "vessels",
            singular: "vessel",
            fields: &[("arrival", FieldKind::Int), ("length", FieldKind::Int), ("handling", FieldKind::Int)],
            exclusive_cells: false,
        },
        TableSchema {
            name: "cranes",
            singular: "crane",
            fields: &[("berth", FieldKind::Int), ("available", FieldKind::Bool)],
            exclusive_cells: false,
        },
    ],
    layers: &[],
    pending: &[],
    grid: None,
    decision_fields: &[
        "schedule",
        "schedule.vessel",
        "schedule.berth",
        "schedule.start",
        "schedule.end",
        "schedule.cranes",
    ],
};

static CATEGORIES: [&str; 5] =
    ["vessel_delay", "berth_closure", "crane_breakdown", "handling_extension", "tidal_restriction"];

struct Slot {
    vessel: i64,
    berth: i64,
    start: i64,
    end: i64,
    cranes: Vec<i64>,
}

fn decode(decision: &Value) -> Result<Vec<Slot>, String> {
    list_field(decision, "schedule")?
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if s.as_record().is_none() {
                return Err(format!("schedule entry {i} is not a record"));
            }
            Ok(Slot {
                vessel: int_field(s, "vessel")?,
                berth: int_field(s, "berth")?,
                start: int_field(s, "start")?,
                end: int_field(s, "end")?,
                cranes: list_field(s, "cranes")?
                    .iter()
                    .map(|c| c.as_int().ok_or_else(|| "'cranes' holds a non-integer".to_owned()))
                    .collect::<Result<_, _>>()?,
            })
        })
        .collect()
}

/// Hours needed to handle `handling` two-crane hours with `cranes` cranes.
fn duration(handling: i64, cranes: i64) -> i64 {
    (handling * 2 + cranes - 1) / cranes
}

fn add_berths(s: &mut SystemState, lengths: &[i64]) {
    let mut crane = 1;
    for (i, len) in lengths.iter().enumerate() {
        let id = i as i64 + 1;
        s.insert(
            "berths",
            id,
            [
                ("length", Value::Int(*len)),
                ("open", Value::Int(0)),
                ("close", Value::Int(BERTH_CLOSE)),
                ("available", Value::Bool(true)),
            ],
        );
        for _ in 0..2 {
            s.insert("cranes", crane, [("berth", Value::Int(id)), ("available", Value::Bool(true))]);
            crane += 1;
        }
    }
}

fn vessel(arrival: i64, length: i64, handling: i64) -> [(&'static str, Value); 3] {
    [("arrival", Value::Int(arrival)), ("length", Value::Int(length)), ("handling", Value::Int(handling))]
}

impl Scenario for Port {
    fn id(&self) -> ScenarioId {
        ScenarioId::Port
    }

    fn schema(&self) -> &'static Schema {
        &SCHEMA
    }

    fn categories(&self) -> &'static [&'static str] {
        &CATEGORIES
    }

    fn base_state(&self) -> SystemState {
        let mut s = SystemState::empty(ScenarioId::Port);
        add_berths(&mut s, &[220, 260, 300, 320, 360, 400]);
        let vessels = [
            (0, 180, 12),
            (4, 250, 18),
            (8, 300, 20),
            (10, 200, 10),
            (16, 350, 24),
            (20, 280, 16),
            (26, 190, 14),
            (30, 390, 22),
            (36, 240, 12),
            (40, 310, 18),
            (48, 210, 10),
            (54, 330, 20),
            (60, 260, 14),
            (68, 180, 8),
            (74, 370, 24),
            (80, 230, 12),
            (90, 300, 16),
            (100, 200, 10),
            (110, 340, 18),
            (120, 260, 14),
        ];
        for (i, (a, l, h)) in vessels.into_iter().enumerate() {
            s.insert("vessels", i as i64 + 1, vessel(a, l, h));
        }
        s
    }

    fn random_state(&self, rng: &mut ChaCha8Rng) -> SystemState {
        let mut s = SystemState::empty(ScenarioId::Port);
        let n = rng.random_range(5..=7);
        let mut lengths: Vec<i64> = (0..n).map(|_| rng.random_range(20..=40) * 10).collect();
        lengths.sort_unstable();
        let longest = *lengths.last().unwrap_or(&200);
        add_berths(&mut s, &lengths);
        for id in 1..=rng.random_range(16..=22) {
            let arrival = rng.random_range(0..=150);
            let length = rng.random_range(15..=longest / 10) * 10;
            let handling = rng.random_range(6..=24);
            s.insert("vessels", id, vessel(arrival, length, handling));
        }
        s
    }

    fn sample_facts(&self, category: &str, state: &SystemState, rng: &mut ChaCha8Rng) -> Option<Vec<Fact>> {
        let plan = state.plan.as_ref().and_then(|p| decode(p).ok()).unwrap_or_default();
        let avail = |t: &str| -> Vec<i64> {
            state.ids(t).into_iter().filter(|id| state.flag(t, *id, "available") == Some(true)).collect()
        };
        let berths = avail("berths");
        let cranes = avail("cranes");
        let vessels = state.ids("vessels");
        let used_berths: Vec<i64> = plan.iter().map(|s| s.berth).collect::<BTreeSet<_>>().into_iter().collect();
        let used_cranes: Vec<i64> = plan.iter().flat_map(|s| s.cranes.iter().copied()).collect();
        let change = |entity: &str, id: i64, field: &str, value: i64| {
            Fact::new(
                category,
                Change::ValueChanged { entity: entity.into(), id, field: field.into(), value: Value::Int(value) },
            )
        };
        let facts = match category {
            "vessel_delay" => {
                let id = *vessels.choose(rng)?;
                let arrival = state.int("vessels", id, "arrival")?;
                let slack = plan.iter().find(|s| s.vessel == id).map(|s| s.start - arrival).unwrap_or(0);
                let delay =
                    if rng.random_bool(0.85) { slack + rng.random_range(1..=12) } else { rng.random_range(1..=10) };
                vec![change("vessels", id, "arrival", arrival + delay)]
            }
            "berth_closure" => {
                let id = pick_biased(&used_berths, &berths, rng)?;
                vec![Fact::new(category, Change::Unavailable { entity: "berths".into(), id })]
            }
            "crane_breakdown" => {
                let mut ids = BTreeSet::new();
                for _ in 0..rng.random_range(1..=2) {
                    ids.insert(pick_biased(&used_cranes, &cranes, rng)?);
                }
                ids.into_iter()
                    .map(|id| Fact::new(category, Change::Unavailable { entity: "cranes".into(), id }))
                    .collect()
            }
            "handling_extension" => {
                let id = *vessels.choose(rng)?;
                let h = state.int("vessels", id, "handling")?;
                vec![change("vessels", id, "handling", h + rng.random_range(4..=16))]
            }
            "tidal_restriction" => {
                let id = pick_biased(&used_berths, &berths, rng)?;
                let close = state.int("berths", id, "close")?;
                let last_end = plan.iter().filter(|s| s.berth == id).map(|s| s.end).max().unwrap_or(close);
                let new_close = if rng.random_bool(0.85) {
                    (last_end - rng.random_range(1..=30)).max(1)
                } else {
                    close - rng.random_range(5..=40)
                };
                vec![change("berths", id, "close", new_close)]
            }
            _ => return None,
        };
        Some(facts)
    }

    fn check_feasible(&self, state: &SystemState, decision: &Value) -> Verdict {
        let plan = match decode(decision) {
            Ok(p) => p,
            Err(e) => return Verdict::fail(Assertion::MalformedDecision, e),
        };
        let mut served = BTreeSet::new();
        let mut by_berth: BTreeMap<i64, Vec<(i64, i64, i64)>> = BTreeMap::new();
        for s in &plan {
            let Some(v) = state.entity("vessels", s.vessel) else {
                return Verdict::fail(Assertion::InvalidTask, format!("no vessel {}", s.vessel));
            };
            if !served.insert(s.vessel) {
                return Verdict::fail(Assertion::DuplicateTask, format!("vessel {} scheduled twice", s.vessel));
            }
            if state.entity("berths", s.berth).is_none() {
                return Verdict::fail(Assertion::InvalidResource, format!("no berth {}", s.berth));
            }
            if state.flag("berths", s.berth, "available") != Some(true) {
                return Verdict::fail(Assertion::UnavailableResource, format!("berth {} is closed", s.berth));
            }
            if s.cranes.is_empty() {
                return Verdict::fail(Assertion::InvalidResource, format!("vessel {} has no cranes", s.vessel));
            }
            for c in &s.cranes {
                if state.entity("cranes", *c).is_none() {
                    return Verdict::fail(Assertion::InvalidResource, format!("no crane {c}"));
                }
                if state.flag("cranes", *c, "available") != Some(true) {
                    return Verdict::fail(Assertion::UnavailableResource, format!("crane {c} is down"));
                }
                if state.int("cranes", *c, "berth") != Some(s.berth) {
                    return Verdict::fail(
                        Assertion::UnavailableResource,
                        format!("crane {c} is not at berth {}", s.berth),
                    );
                }
            }
            let int = |k: &str| v.get(k).and_then(Value::as_int).unwrap_or(0);
            let arrival = int("arrival");
            if s.start < arrival {
                return Verdict::fail(
                    Assertion::StartBeforeArrival,
                    format!("vessel {} starts at {} but arrives at {arrival}", s.vessel, s.start),
                );
            }
            let berth_len = state.int("berths", s.berth, "length").unwrap_or(0);
            if int("length") > berth_len {
                return Verdict::fail(
                    Assertion::BerthTooShort,
                    format!("vessel {} does not fit berth {}", s.vessel, s.berth),
                );
            }
            let open = state.int("berths", s.berth, "open").unwrap_or(0);
            let close = state.int("berths", s.berth, "close").unwrap_or(0);
            if s.start < open || s.end > close {
                return Verdict::fail(
                    Assertion::BerthWindow,
                    format!(
                        "vessel {} occupies [{}, {}) outside berth {} window [{open}, {close}]",
                        s.vessel, s.start, s.end, s.berth
                    ),
                );
            }
            let need = duration(int("handling"), s.cranes.len() as i64);
            if s.end - s.start < need {
                return Verdict::fail(
                    Assertion::HandlingTooShort,
                    format!("vessel {} needs {need} hours, got {}", s.vessel, s.end - s.start),
                );
            }
            by_berth.entry(s.berth).or_default().push((s.start, s.end, s.vessel));
        }
        for (berth, mut slots) in by_berth {
            slots.sort_unstable();
            if let Some(w) = slots.windows(2).find(|w| w[1].0 < w[0].1) {
                return Verdict::fail(
                    Assertion::BerthDoubleBooked,
                    format!("vessels {} and {} overlap at berth {berth}", w[0].2, w[1].2),
                );
            }
        }
        for id in state.ids("vessels") {
            if !served.contains(&id) {
                return Verdict::fail(Assertion::UnservedTask, format!("vessel {id} is not scheduled"));
            }
        }
        Verdict::Pass
    }

    fn narrate(&self, fact: &Fact, state: &SystemState) -> String {
        match &fact.change {
            Change::Unavailable { entity, id } if entity == "cranes" => {
                let berth = state.int("cranes", *id, "berth").unwrap_or(0);
                format!("Quay crane No. {id} at berth No. {berth} breaks down.")
            }
            Change::Unavailable { id, .. } => format!("Berth No. {id} is closed after a quay accident."),
            Change::ValueChanged { id, field, value, .. } => match field.as_str() {
                "arrival" => format!("Vessel No. {id} is delayed and now arrives at hour {value}."),
                "handling" => format!("Cargo handling for vessel No. {id} is extended to {value} hours."),
                "close" => format!("A tidal restriction closes berth No. {id} at hour {value}."),
                _ => format!("The {field} of No. {id} changes to {value}."),
            },
            other => format!("Port event: {other:?}."),
        }
    }
}

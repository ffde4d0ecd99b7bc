//! Warehouse order handling: robots collect each order at its pickup cell
//! and carry it to a free storage slot on a 20x20 floor.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::deck::{cell_text, rect_around};
use super::generate::pick_biased;
use super::{
    cells_field, check_route, int_field, list_field, random_free_cell, Assertion, Cell, Change, Entity, Fact,
    FieldKind, Grid, Rect, Scenario, ScenarioId, Schema, SystemState, TableSchema, Verdict,
};
use crate::afdsl::Value;

pub struct Warehouse;

const GRID: Grid = Grid { width: 20, height: 20 };

const BLOCKING: [&str; 2] = ["racks", "blocked"];

static SCHEMA: Schema = Schema {
    tables: &[
        TableSchema {
            name: "robots",
            singular: "robot",
            fields: &[("cell", FieldKind::Cell), ("available", FieldKind::Bool), ("range", FieldKind::Int)],
            exclusive_cells: true,
        },
        TableSchema {
            name: "slots",
            singular: "slot",
            fields: &[("cell", FieldKind::Cell), ("free", FieldKind::Bool)],
            exclusive_cells: true,
        },
        TableSchema {
            name: "orders",
            singular: "order",
            fields: &[("cell", FieldKind::Cell), ("active", FieldKind::Bool)],
            exclusive_cells: false,
        },
    ],
    layers: &BLOCKING,
    pending: &["orders"],
    grid: Some(GRID),
    decision_fields: &[
        "assignments",
        "assignments.order",
        "assignments.robot",
        "assignments.slot",
        "assignments.route",
    ],
};

static CATEGORIES: [&str; 8] = [
    "robot_breakdown",
    "robot_relocation",
    "aisle_blockage",
    "slot_unavailable",
    "order_surge",
    "order_cancellation",
    "pickup_relocation",
    "battery_low",
];

struct Assign {
    order: i64,
    robot: i64,
    slot: i64,
    route: Vec<Cell>,
}

fn decode(decision: &Value) -> Result<Vec<Assign>, String> {
    list_field(decision, "assignments")?
        .iter()
        .enumerate()
        .map(|(i, a)| {
            if a.as_record().is_none() {
                return Err(format!("assignment {i} is not a record"));
            }
            Ok(Assign {
                order: int_field(a, "order")?,
                robot: int_field(a, "robot")?,
                slot: int_field(a, "slot")?,
                route: cells_field(a, "route")?,
            })
        })
        .collect()
}

fn racks() -> Vec<Rect> {
    let mut out = Vec::new();
    for x in [3, 8, 13] {
        out.push(Rect::new((x, 3), (x + 1, 8)));
        out.push(Rect::new((x, 11), (x + 1, 16)));
    }
    out
}

fn slot_cells() -> Vec<Cell> {
    let mut out = Vec::new();
    for x in [5, 10, 15] {
        for y in [4, 7, 12, 15] {
            out.push((x, y));
        }
    }
    out
}

fn robot(cell: Cell, range: i64) -> [(&'static str, Value); 3] {
    [("cell", Value::Coord(cell.0, cell.1)), ("available", Value::Bool(true)), ("range", Value::Int(range))]
}

fn order(cell: Cell) -> [(&'static str, Value); 2] {
    [("cell", Value::Coord(cell.0, cell.1)), ("active", Value::Bool(true))]
}

/// Pickup cell and whether the order still needs handling.
fn order_info(state: &SystemState, id: i64) -> Option<(Cell, bool)> {
    if let Some(e) = state.entity("orders", id) {
        return Some((e.get("cell")?.as_coord()?, e.get("active")?.as_bool()?));
    }
    let e = state.pending("orders").iter().find(|e| e.get("id") == Some(&Value::Int(id)))?;
    Some((e.get("cell")?.as_coord()?, true))
}

impl Scenario for Warehouse {
    fn id(&self) -> ScenarioId {
        ScenarioId::Warehouse
    }

    fn schema(&self) -> &'static Schema {
        &SCHEMA
    }

    fn categories(&self) -> &'static [&'static str] {
        &CATEGORIES
    }

    fn base_state(&self) -> SystemState {
        let mut s = SystemState::empty(ScenarioId::Warehouse);
        s.layers.insert("racks".into(), racks());
        for (i, c) in slot_cells().into_iter().enumerate() {
            s.insert("slots", i as i64 + 1, [("cell", Value::Coord(c.0, c.1)), ("free", Value::Bool(true))]);
        }
        let robots = [(0, 0), (2, 0), (6, 0), (11, 0), (17, 0), (19, 5), (0, 19), (19, 19)];
        for (i, c) in robots.into_iter().enumerate() {
            s.insert("robots", i as i64 + 1, robot(c, 40));
        }
        let orders = [(1, 10), (7, 2), (12, 18), (18, 10), (6, 19), (17, 2)];
        for (i, c) in orders.into_iter().enumerate() {
            s.insert("orders", i as i64 + 1, order(c));
        }
        s
    }

    fn random_state(&self, rng: &mut ChaCha8Rng) -> SystemState {
        let mut s = SystemState::empty(ScenarioId::Warehouse);
        let racks = racks();
        let mut taken: BTreeSet<Cell> = racks.iter().flat_map(Rect::cells).collect();
        s.layers.insert("racks".into(), racks);
        for (i, c) in slot_cells().into_iter().enumerate() {
            taken.insert(c);
            s.insert(
                "slots",
                i as i64 + 1,
                [("cell", Value::Coord(c.0, c.1)), ("free", Value::Bool(rng.random_bool(0.85)))],
            );
        }
        for id in 1..=rng.random_range(6..=9) {
            let c = random_free_cell(GRID, &taken, rng).expect("floor has free cells");
            taken.insert(c);
            s.insert("robots", id, robot(c, rng.random_range(28..=45)));
        }
        for id in 1..=rng.random_range(4..=7) {
            let c = random_free_cell(GRID, &taken, rng).expect("floor has free cells");
            taken.insert(c);
            s.insert("orders", id, order(c));
        }
        s
    }

    fn sample_facts(&self, category: &str, state: &SystemState, rng: &mut ChaCha8Rng) -> Option<Vec<Fact>> {
        let plan = state.plan.as_ref().and_then(|p| decode(p).ok()).unwrap_or_default();
        let filtered = |t: &str, f: &str| -> Vec<i64> {
            state.ids(t).into_iter().filter(|id| state.flag(t, *id, f) == Some(true)).collect()
        };
        let robots = filtered("robots", "available");
        let slots = filtered("slots", "free");
        let orders = filtered("orders", "active");
        let used_robots: Vec<i64> = plan.iter().map(|a| a.robot).collect();
        let used_slots: Vec<i64> = plan.iter().map(|a| a.slot).collect();
        let served: Vec<i64> = plan.iter().map(|a| a.order).collect();
        let mut occupied = state.blocked(&BLOCKING);
        for t in ["robots", "slots", "orders"] {
            for id in state.ids(t) {
                occupied.extend(state.cell(t, id, "cell"));
            }
        }
        let keep_clear: BTreeSet<Cell> = ["slots", "orders"]
            .iter()
            .flat_map(|t| state.ids(t).into_iter().filter_map(|id| state.cell(t, id, "cell")))
            .collect();
        let interior: Vec<Cell> = plan
            .iter()
            .filter(|a| a.route.len() > 2)
            .flat_map(|a| a.route[1..a.route.len() - 1].iter().copied())
            .collect();
        let fact = |change| Fact::new(category, change);
        let facts = match category {
            "robot_breakdown" => vec![fact(Change::Unavailable {
                entity: "robots".into(),
                id: pick_biased(&used_robots, &robots, rng)?,
            })],
            "robot_relocation" => vec![fact(Change::Relocated {
                entity: "robots".into(),
                id: pick_biased(&used_robots, &robots, rng)?,
                cell: random_free_cell(GRID, &occupied, rng)?,
            })],
            "aisle_blockage" => {
                let c = if !interior.is_empty() && rng.random_bool(0.85) {
                    interior[rng.random_range(0..interior.len())]
                } else {
                    (rng.random_range(0..GRID.width), rng.random_range(0..GRID.height))
                };
                let (w, h) = [(1, 2), (2, 1), (2, 2)][rng.random_range(0..3)];
                let r = rect_around(GRID, c, w, h, rng);
                if r.cells().iter().any(|c| keep_clear.contains(c)) {
                    return None;
                }
                vec![fact(Change::Blocked { layer: "blocked".into(), lo: r.lo, hi: r.hi })]
            }
            "slot_unavailable" => vec![fact(Change::ValueChanged {
                entity: "slots".into(),
                id: pick_biased(&used_slots, &slots, rng)?,
                field: "free".into(),
                value: Value::Bool(false),
            })],
            "order_surge" => {
                let mut out = Vec::new();
                let first = state.next_id("orders");
                for k in 0..rng.random_range(1..=2) {
                    let cell = random_free_cell(GRID, &occupied, rng)?;
                    occupied.insert(cell);
                    let record: Entity =
                        [("id".to_owned(), Value::Int(first + k)), ("cell".to_owned(), Value::Coord(cell.0, cell.1))]
                            .into_iter()
                            .collect();
                    out.push(fact(Change::Added { entity: "orders".into(), record }));
                }
                out
            }
            "order_cancellation" => vec![fact(Change::ValueChanged {
                entity: "orders".into(),
                id: pick_biased(&served, &orders, rng)?,
                field: "active".into(),
                value: Value::Bool(false),
            })],
            "pickup_relocation" => vec![fact(Change::Relocated {
                entity: "orders".into(),
                id: pick_biased(&served, &orders, rng)?,
                cell: random_free_cell(GRID, &occupied, rng)?,
            })],
            "battery_low" => {
                let id = pick_biased(&used_robots, &robots, rng)?;
                let steps = plan.iter().find(|a| a.robot == id).map(|a| a.route.len() as i64 - 1);
                let value = match steps {
                    Some(s) if s > 1 => rng.random_range(1..s),
                    _ => rng.random_range(3..=12),
                };
                vec![fact(Change::ValueChanged {
                    entity: "robots".into(),
                    id,
                    field: "range".into(),
                    value: Value::Int(value),
                })]
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
        let grid = state.grid.unwrap_or(GRID);
        let blocked = state.blocked(&BLOCKING);
        let mut served = BTreeSet::new();
        let mut robots = BTreeSet::new();
        let mut slots = BTreeSet::new();
        for a in &plan {
            let Some((pickup, active)) = order_info(state, a.order) else {
                return Verdict::fail(Assertion::InvalidTask, format!("no order {}", a.order));
            };
            if !active {
                return Verdict::fail(Assertion::InactiveTask, format!("order {} is cancelled", a.order));
            }
            if !served.insert(a.order) {
                return Verdict::fail(Assertion::DuplicateTask, format!("order {} assigned twice", a.order));
            }
            if state.entity("robots", a.robot).is_none() {
                return Verdict::fail(Assertion::InvalidResource, format!("no robot {}", a.robot));
            }
            if state.flag("robots", a.robot, "available") != Some(true) {
                return Verdict::fail(Assertion::UnavailableResource, format!("robot {} is out of service", a.robot));
            }
            if !robots.insert(a.robot) {
                return Verdict::fail(Assertion::ResourceReused, format!("robot {} assigned twice", a.robot));
            }
            if state.entity("slots", a.slot).is_none() {
                return Verdict::fail(Assertion::InvalidResource, format!("no slot {}", a.slot));
            }
            if state.flag("slots", a.slot, "free") != Some(true) {
                return Verdict::fail(Assertion::UnavailableResource, format!("slot {} is unavailable", a.slot));
            }
            if !slots.insert(a.slot) {
                return Verdict::fail(Assertion::ResourceReused, format!("slot {} assigned twice", a.slot));
            }
            let start = state.cell("robots", a.robot, "cell").unwrap_or((-1, -1));
            let end = state.cell("slots", a.slot, "cell").unwrap_or((-1, -1));
            let range = state.int("robots", a.robot, "range").unwrap_or(0);
            let v = check_route(grid, &a.route, start, end, &blocked, range, &format!("robot {}", a.robot));
            if !v.is_pass() {
                return v;
            }
            if !a.route.contains(&pickup) {
                return Verdict::fail(
                    Assertion::MissedPickup,
                    format!("robot {} never reaches pickup {}", a.robot, cell_text(pickup)),
                );
            }
        }
        for id in state.ids("orders") {
            if state.flag("orders", id, "active") == Some(true) && !served.contains(&id) {
                return Verdict::fail(Assertion::UnservedTask, format!("order {id} is not handled"));
            }
        }
        for e in state.pending("orders") {
            if let Some(id) = e.get("id").and_then(Value::as_int) {
                if !served.contains(&id) {
                    return Verdict::fail(Assertion::UnservedTask, format!("order {id} is not handled"));
                }
            }
        }
        Verdict::Pass
    }

    fn narrate(&self, fact: &Fact, _state: &SystemState) -> String {
        match &fact.change {
            Change::Unavailable { id, .. } => format!("Robot No. {id} breaks down and leaves service."),
            Change::Relocated { entity, id, cell } if entity == "robots" => {
                format!("Robot No. {id} is moved to {}.", cell_text(*cell))
            }
            Change::Relocated { id, cell, .. } => {
                format!("The pickup point of order No. {id} moves to {}.", cell_text(*cell))
            }
            Change::Blocked { lo, hi, .. } => {
                format!("An aisle blockage covers the region spanning {} to {}.", cell_text(*lo), cell_text(*hi))
            }
            Change::ValueChanged { entity, id, value, .. } => match entity.as_str() {
                "slots" => format!("Storage slot No. {id} becomes unavailable."),
                "orders" => format!("Order No. {id} is cancelled."),
                _ => format!("Robot No. {id} runs low on battery; its range drops to {value} cells."),
            },
            Change::Added { record, .. } => {
                let id = record.get("id").map(|v| v.to_string()).unwrap_or_default();
                let cell = record.get("cell").and_then(Value::as_coord).map(cell_text).unwrap_or_default();
                format!("A new order No. {id} arrives for pickup at {cell}.")
            }
        }
    }
}

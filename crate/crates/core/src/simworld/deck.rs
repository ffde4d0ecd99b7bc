//! Flight-deck support scheduling: typed support vehicles serve aircraft
//! tasks on a 12x12 deck grid.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::generate::pick_biased;
use super::{
    cells_field, check_route, int_field, list_field, random_free_cell, Assertion, Cell, Change, Fact, FieldKind, Grid,
    Rect, Scenario, ScenarioId, Schema, SystemState, TableSchema, Verdict,
};
use crate::afdsl::Value;

pub struct Deck;

const GRID: Grid = Grid { width: 12, height: 12 };

const KINDS: [&str; 3] = ["hydraulic", "oxygen", "maintenance"];

const BLOCKING: [&str; 4] = ["obstacles", "hazards", "closed_lanes", "restricted_zones"];

static SCHEMA: Schema = Schema {
    tables: &[
        TableSchema {
            name: "vehicles",
            singular: "vehicle",
            fields: &[
                ("kind", FieldKind::Kind),
                ("cell", FieldKind::Cell),
                ("available", FieldKind::Bool),
                ("range", FieldKind::Int),
            ],
            exclusive_cells: true,
        },
        TableSchema {
            name: "tasks",
            singular: "task",
            fields: &[
                ("kind", FieldKind::Kind),
                ("cell", FieldKind::Cell),
                ("priority", FieldKind::Int),
                ("active", FieldKind::Bool),
            ],
            exclusive_cells: false,
        },
    ],
    layers: &BLOCKING,
    pending: &["tasks"],
    grid: Some(GRID),
    decision_fields: &["assignments", "assignments.task", "assignments.vehicle", "assignments.route"],
};

static CATEGORIES: [&str; 15] = [
    "equipment_failure",
    "comm_loss",
    "vehicle_reposition",
    "battery_depletion",
    "equipment_reconfiguration",
    "explosion",
    "fuel_spill",
    "fire_outbreak",
    "debris_on_deck",
    "lane_closure",
    "jet_blast",
    "aircraft_relocation",
    "priority_escalation",
    "task_cancellation",
    "urgent_task",
];

pub(crate) struct Assign {
    pub task: i64,
    pub vehicle: i64,
    pub route: Vec<Cell>,
}

pub(crate) fn decode(decision: &Value) -> Result<Vec<Assign>, String> {
    list_field(decision, "assignments")?
        .iter()
        .enumerate()
        .map(|(i, a)| {
            if a.as_record().is_none() {
                return Err(format!("assignment {i} is not a record"));
            }
            Ok(Assign {
                task: int_field(a, "task")?,
                vehicle: int_field(a, "vehicle")?,
                route: cells_field(a, "route")?,
            })
        })
        .collect()
}

struct TaskInfo {
    kind: String,
    cell: Cell,
    priority: i64,
    active: bool,
}

fn task_info(state: &SystemState, id: i64) -> Option<TaskInfo> {
    if let Some(e) = state.entity("tasks", id) {
        return Some(TaskInfo {
            kind: e.get("kind")?.as_ident()?.to_owned(),
            cell: e.get("cell")?.as_coord()?,
            priority: e.get("priority")?.as_int()?,
            active: e.get("active")?.as_bool()?,
        });
    }
    let e = state.pending("tasks").iter().find(|e| e.get("id") == Some(&Value::Int(id)))?;
    Some(TaskInfo {
        kind: e.get("kind")?.as_ident()?.to_owned(),
        cell: e.get("cell")?.as_coord()?,
        priority: e.get("priority")?.as_int()?,
        active: true,
    })
}

fn vehicle(kind: &str, cell: Cell, range: i64) -> [(&'static str, Value); 4] {
    [
        ("kind", Value::Ident(kind.into())),
        ("cell", Value::Coord(cell.0, cell.1)),
        ("available", Value::Bool(true)),
        ("range", Value::Int(range)),
    ]
}

fn task(kind: &str, cell: Cell, priority: i64) -> [(&'static str, Value); 4] {
    [
        ("kind", Value::Ident(kind.into())),
        ("cell", Value::Coord(cell.0, cell.1)),
        ("priority", Value::Int(priority)),
        ("active", Value::Bool(true)),
    ]
}

fn vehicle_label(kind: Option<&str>) -> &'static str {
    match kind {
        Some("hydraulic") => "Hydraulic vehicle",
        Some("oxygen") => "Oxygen supply vehicle",
        Some("maintenance") => "Maintenance vehicle",
        _ => "Support vehicle",
    }
}

pub(crate) fn cell_text(c: Cell) -> String {
    format!("({},{})", c.0, c.1)
}

/// Rectangle of size `w` x `h` inside `grid` that contains `c`.
pub(crate) fn rect_around(grid: Grid, c: Cell, w: i64, h: i64, rng: &mut ChaCha8Rng) -> Rect {
    let x = (c.0 - rng.random_range(0..w)).clamp(0, grid.width - w);
    let y = (c.1 - rng.random_range(0..h)).clamp(0, grid.height - h);
    Rect::new((x, y), (x + w - 1, y + h - 1))
}

impl Scenario for Deck {
    fn id(&self) -> ScenarioId {
        ScenarioId::Deck
    }

    fn schema(&self) -> &'static Schema {
        &SCHEMA
    }

    fn categories(&self) -> &'static [&'static str] {
        &CATEGORIES
    }

    fn base_state(&self) -> SystemState {
        let mut s = SystemState::empty(ScenarioId::Deck);
        let fleet = [
            (1, "hydraulic", (1, 10)),
            (2, "hydraulic", (2, 2)),
            (3, "oxygen", (7, 4)),
            (4, "maintenance", (11, 11)),
            (5, "maintenance", (6, 6)),
            (6, "oxygen", (0, 11)),
            (7, "hydraulic", (11, 6)),
            (8, "maintenance", (3, 6)),
            (9, "oxygen", (10, 10)),
        ];
        for (id, kind, cell) in fleet {
            s.insert("vehicles", id, vehicle(kind, cell, 16));
        }
        let tasks = [
            (1, "hydraulic", (1, 3), 2),
            (2, "maintenance", (9, 7), 3),
            (3, "oxygen", (9, 4), 1),
            (4, "hydraulic", (5, 10), 1),
        ];
        for (id, kind, cell, p) in tasks {
            s.insert("tasks", id, task(kind, cell, p));
        }
        s.layers.insert(
            "obstacles".into(),
            vec![Rect::new((3, 9), (3, 10)), Rect::new((10, 0), (11, 2)), Rect::new((5, 2), (6, 3))],
        );
        s
    }

    fn random_state(&self, rng: &mut ChaCha8Rng) -> SystemState {
        let mut s = SystemState::empty(ScenarioId::Deck);
        let mut taken = BTreeSet::new();
        let mut obstacles = Vec::new();
        for _ in 0..rng.random_range(2..=4) {
            let w = rng.random_range(1..=2);
            let h = rng.random_range(1..=3);
            let lo = (rng.random_range(0..=GRID.width - w), rng.random_range(0..=GRID.height - h));
            let r = Rect::new(lo, (lo.0 + w - 1, lo.1 + h - 1));
            taken.extend(r.cells());
            obstacles.push(r);
        }
        s.layers.insert("obstacles".into(), obstacles);
        for id in 1..=9 {
            let c = random_free_cell(GRID, &taken, rng).expect("deck has free cells");
            taken.insert(c);
            let range = rng.random_range(12..=20);
            s.insert("vehicles", id, vehicle(KINDS[(id as usize - 1) % 3], c, range));
        }
        for id in 1..=rng.random_range(4..=6) {
            let c = random_free_cell(GRID, &taken, rng).expect("deck has free cells");
            taken.insert(c);
            let kind = KINDS[rng.random_range(0..3)];
            let p = rng.random_range(1..=3);
            s.insert("tasks", id, task(kind, c, p));
        }
        s
    }

    fn sample_facts(&self, category: &str, state: &SystemState, rng: &mut ChaCha8Rng) -> Option<Vec<Fact>> {
        let plan = state.plan.as_ref().and_then(|p| decode(p).ok()).unwrap_or_default();
        let used: Vec<i64> = plan.iter().map(|a| a.vehicle).collect();
        let served: Vec<i64> = plan.iter().map(|a| a.task).collect();
        let vehicles: Vec<i64> = state
            .ids("vehicles")
            .into_iter()
            .filter(|v| state.flag("vehicles", *v, "available") == Some(true))
            .collect();
        let tasks: Vec<i64> =
            state.ids("tasks").into_iter().filter(|t| state.flag("tasks", *t, "active") == Some(true)).collect();
        let interior: Vec<Cell> = plan
            .iter()
            .filter(|a| a.route.len() > 2)
            .flat_map(|a| a.route[1..a.route.len() - 1].iter().copied())
            .collect();
        let mut occupied: BTreeSet<Cell> = state.blocked(&BLOCKING);
        for t in ["vehicles", "tasks"] {
            for id in state.ids(t) {
                occupied.extend(state.cell(t, id, "cell"));
            }
        }
        let task_cells: BTreeSet<Cell> = tasks.iter().filter_map(|t| state.cell("tasks", *t, "cell")).collect();
        let fact = |change| Fact::new(category, change);
        let zone = |layer: &str, rng: &mut ChaCha8Rng, w: i64, h: i64| -> Option<Fact> {
            let c = if !interior.is_empty() && rng.random_bool(0.85) {
                *interior.choose(rng)?
            } else {
                (rng.random_range(0..GRID.width), rng.random_range(0..GRID.height))
            };
            let r = rect_around(GRID, c, w, h, rng);
            if r.cells().iter().any(|c| task_cells.contains(c)) {
                return None;
            }
            Some(Fact::new(category, Change::Blocked { layer: layer.into(), lo: r.lo, hi: r.hi }))
        };
        let facts = match category {
            "equipment_failure" | "comm_loss" => {
                let n = if category == "equipment_failure" { rng.random_range(1..=2) } else { 1 };
                let mut ids = BTreeSet::new();
                for _ in 0..n {
                    ids.insert(pick_biased(&used, &vehicles, rng)?);
                }
                ids.into_iter().map(|id| fact(Change::Unavailable { entity: "vehicles".into(), id })).collect()
            }
            "vehicle_reposition" => {
                let id = pick_biased(&used, &vehicles, rng)?;
                let cell = random_free_cell(GRID, &occupied, rng)?;
                vec![fact(Change::Relocated { entity: "vehicles".into(), id, cell })]
            }
            "battery_depletion" => {
                let id = pick_biased(&used, &vehicles, rng)?;
                let steps = plan.iter().find(|a| a.vehicle == id).map(|a| a.route.len() as i64 - 1);
                let value = match steps {
                    Some(s) if s > 1 => rng.random_range(1..s),
                    _ => rng.random_range(2..=8),
                };
                vec![fact(Change::ValueChanged {
                    entity: "vehicles".into(),
                    id,
                    field: "range".into(),
                    value: Value::Int(value),
                })]
            }
            "equipment_reconfiguration" => {
                let id = pick_biased(&used, &vehicles, rng)?;
                let cur = state.kind("vehicles", id, "kind")?;
                let others: Vec<&str> = KINDS.iter().copied().filter(|k| *k != cur).collect();
                vec![fact(Change::ValueChanged {
                    entity: "vehicles".into(),
                    id,
                    field: "kind".into(),
                    value: Value::Ident((*others.choose(rng)?).into()),
                })]
            }
            "explosion" | "fuel_spill" | "fire_outbreak" | "debris_on_deck" => {
                let (w, h) = (rng.random_range(1..=2), rng.random_range(1..=2));
                vec![zone("hazards", rng, w, h)?]
            }
            "lane_closure" => {
                let len = rng.random_range(3..=5);
                let (w, h) = if rng.random_bool(0.5) { (len, 1) } else { (1, len) };
                vec![zone("closed_lanes", rng, w, h)?]
            }
            "jet_blast" => {
                let (w, h) = if rng.random_bool(0.5) { (2, 3) } else { (3, 2) };
                vec![zone("restricted_zones", rng, w, h)?]
            }
            "aircraft_relocation" => {
                let id = pick_biased(&served, &tasks, rng)?;
                let cell = random_free_cell(GRID, &occupied, rng)?;
                vec![fact(Change::Relocated { entity: "tasks".into(), id, cell })]
            }
            "priority_escalation" => {
                let id = pick_biased(&served, &tasks, rng)?;
                let p = state.int("tasks", id, "priority")?;
                vec![fact(Change::ValueChanged {
                    entity: "tasks".into(),
                    id,
                    field: "priority".into(),
                    value: Value::Int(p + rng.random_range(1..=3)),
                })]
            }
            "task_cancellation" => {
                let id = pick_biased(&served, &tasks, rng)?;
                vec![fact(Change::ValueChanged {
                    entity: "tasks".into(),
                    id,
                    field: "active".into(),
                    value: Value::Bool(false),
                })]
            }
            "urgent_task" => {
                let cell = random_free_cell(GRID, &occupied, rng)?;
                let record = [
                    ("id", Value::Int(state.next_id("tasks"))),
                    ("kind", Value::Ident(KINDS[rng.random_range(0..3)].into())),
                    ("cell", Value::Coord(cell.0, cell.1)),
                    ("priority", Value::Int(rng.random_range(1..=4))),
                ]
                .into_iter()
                .map(|(k, v)| (k.to_owned(), v))
                .collect();
                vec![fact(Change::Added { entity: "tasks".into(), record })]
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
        let mut used = BTreeSet::new();
        let mut priorities = Vec::new();
        for a in &plan {
            let Some(t) = task_info(state, a.task) else {
                return Verdict::fail(Assertion::InvalidTask, format!("no task {}", a.task));
            };
            if !t.active {
                return Verdict::fail(Assertion::InactiveTask, format!("task {} is not active", a.task));
            }
            if !served.insert(a.task) {
                return Verdict::fail(Assertion::DuplicateTask, format!("task {} assigned twice", a.task));
            }
            if state.entity("vehicles", a.vehicle).is_none() {
                return Verdict::fail(Assertion::InvalidResource, format!("no vehicle {}", a.vehicle));
            }
            if state.flag("vehicles", a.vehicle, "available") != Some(true) {
                return Verdict::fail(Assertion::UnavailableResource, format!("vehicle {} is unavailable", a.vehicle));
            }
            if state.kind("vehicles", a.vehicle, "kind") != Some(t.kind.as_str()) {
                return Verdict::fail(
                    Assertion::KindMismatch,
                    format!("vehicle {} cannot serve a {} task", a.vehicle, t.kind),
                );
            }
            if !used.insert(a.vehicle) {
                return Verdict::fail(Assertion::ResourceReused, format!("vehicle {} assigned twice", a.vehicle));
            }
            let start = state.cell("vehicles", a.vehicle, "cell").unwrap_or((-1, -1));
            let range = state.int("vehicles", a.vehicle, "range").unwrap_or(0);
            let v = check_route(grid, &a.route, start, t.cell, &blocked, range, &format!("vehicle {}", a.vehicle));
            if !v.is_pass() {
                return v;
            }
            priorities.push((a.task, t.priority));
        }
        if let Some(w) = priorities.windows(2).find(|w| w[0].1 < w[1].1) {
            return Verdict::fail(
                Assertion::PriorityOrder,
                format!("task {} (priority {}) is served before task {} (priority {})", w[0].0, w[0].1, w[1].0, w[1].1),
            );
        }
        for id in state.ids("tasks") {
            if state.flag("tasks", id, "active") == Some(true) && !served.contains(&id) {
                return Verdict::fail(Assertion::UnservedTask, format!("task {id} is not served"));
            }
        }
        for e in state.pending("tasks") {
            if let Some(id) = e.get("id").and_then(Value::as_int) {
                if !served.contains(&id) {
                    return Verdict::fail(Assertion::UnservedTask, format!("task {id} is not served"));
                }
            }
        }
        Verdict::Pass
    }

    fn narrate(&self, fact: &Fact, state: &SystemState) -> String {
        let veh = |id: i64| vehicle_label(state.kind("vehicles", id, "kind"));
        match (&fact.change, fact.category.as_str()) {
            (Change::Unavailable { id, .. }, "comm_loss") => {
                format!("Communication with {} No. {id} is lost.", veh(*id).to_lowercase())
            }
            (Change::Unavailable { id, .. }, _) => {
                format!("{} No. {id} becomes unavailable due to failures.", veh(*id))
            }
            (Change::Relocated { entity, id, cell }, _) if entity == "vehicles" => {
                format!("{} No. {id} is adjusted to {}.", veh(*id), cell_text(*cell))
            }
            (Change::Relocated { id, cell, .. }, _) => {
                format!("The aircraft of task No. {id} is relocated to {}.", cell_text(*cell))
            }
            (Change::ValueChanged { id, field, value, .. }, _) => match field.as_str() {
                "range" => format!(
                    "The battery of {} No. {id} is depleted; its range drops to {value} cells.",
                    veh(*id).to_lowercase()
                ),
                "kind" => {
                    format!("{} No. {id} is reconfigured for {} duty.", veh(*id), value.as_ident().unwrap_or("other"))
                }
                "priority" => format!("Task No. {id} is escalated to priority {value}."),
                "active" => format!("Task No. {id} is cancelled."),
                _ => format!("Task No. {id} changes its {field} to {value}."),
            },
            (Change::Blocked { lo, hi, .. }, cat) => {
                let span = format!("{} to {}", cell_text(*lo), cell_text(*hi));
                match cat {
                    "explosion" => format!("An explosion occurs in the grid region spanning {span}."),
                    "fuel_spill" => format!("A fuel spill covers the grid region spanning {span}."),
                    "fire_outbreak" => format!("A fire breaks out in the grid region spanning {span}."),
                    "debris_on_deck" => format!("Debris falls on the grid region spanning {span}."),
                    "lane_closure" => format!("The deck lane from {span} is closed."),
                    "jet_blast" => format!("Jet blast restricts the grid region spanning {span}."),
                    _ => format!("The grid region spanning {span} is blocked."),
                }
            }
            (Change::Added { record, .. }, _) => {
                let get = |k: &str| record.get(k).map(|v| v.to_string()).unwrap_or_default();
                let cell = record.get("cell").and_then(Value::as_coord).map(cell_text).unwrap_or_default();
                format!(
                    "An urgent {} task No. {} is raised at {cell} with priority {}.",
                    record.get("kind").and_then(Value::as_ident).unwrap_or("support"),
                    get("id"),
                    get("priority")
                )
            }
        }
    }
}

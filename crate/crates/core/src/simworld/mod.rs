//! Desk-scale scheduling scenarios: state model, emergencies, feasibility
//! oracles and the seeded case generator.
//!
//! All three scenarios share one state representation: entity tables keyed
//! by integer id, named rectangle layers, pending additions and (for grid
//! scenarios) the grid size. Each scenario supplies its schema, initial
//! states, an oracle over its decision shape, and per-category fact
//! samplers.

mod deck;
mod generate;
mod grid;
mod port;
mod warehouse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::afdsl::{CapabilityTable, Value};

pub use generate::{case_clock, fact_impacts, generate_cases, golden_cases, label_case, CaseCounts, GOLDEN_CLOCK_BASE};
pub use grid::{adjacent, Cell, Grid, Rect};

/// Version tag written into every case record.
pub const CASE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    Port,
    Warehouse,
    Deck,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 3] = [ScenarioId::Port, ScenarioId::Warehouse, ScenarioId::Deck];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::Port => "port",
            ScenarioId::Warehouse => "warehouse",
            ScenarioId::Deck => "deck",
        }
    }

    /// Benchmark name used in report tables.
    pub fn task_name(self) -> &'static str {
        match self {
            ScenarioId::Port => "EvalPort",
            ScenarioId::Warehouse => "EvalWare",
            ScenarioId::Deck => "EvalDeck",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "port" | "evalport" => Ok(ScenarioId::Port),
            "warehouse" | "ware" | "evalware" => Ok(ScenarioId::Warehouse),
            "deck" | "evaldeck" => Ok(ScenarioId::Deck),
            other => Err(SimError::UnknownScenario(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
    #[error("scenario mismatch: expected {expected}, got {got}")]
    ScenarioMismatch { expected: ScenarioId, got: ScenarioId },
    #[error("no {entity} with id {id}")]
    DanglingEntity { entity: String, id: i64 },
    #[error("unknown field '{0}'")]
    UnknownField(String),
    #[error("cell ({}, {}) is outside the grid", .0.0, .0.1)]
    OffGrid(Cell),
    #[error("cell ({}, {}) is already occupied", .0.0, .0.1)]
    Occupied(Cell),
    #[error("invalid fact: {0}")]
    InvalidFact(String),
    #[error("unknown category '{0}'")]
    UnknownCategory(String),
    #[error("{0}")]
    Io(String),
}

/// Value kind of an entity field; used to validate fact payloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Int,
    Bool,
    Cell,
    Kind,
}

impl FieldKind {
    fn admits(self, v: &Value) -> bool {
        matches!(
            (self, v),
            (FieldKind::Int, Value::Int(_))
                | (FieldKind::Bool, Value::Bool(_))
                | (FieldKind::Cell, Value::Coord(..))
                | (FieldKind::Kind, Value::Ident(_))
        )
    }
}

#[derive(Debug)]
pub struct TableSchema {
    pub name: &'static str,
    pub singular: &'static str,
    pub fields: &'static [(&'static str, FieldKind)],
    /// Whether two entities of this table may not share a cell.
    pub exclusive_cells: bool,
}

impl TableSchema {
    pub fn field(&self, name: &str) -> Option<FieldKind> {
        self.fields.iter().find(|(n, _)| *n == name).map(|(_, k)| *k)
    }
}

/// Shape of one scenario's state and decision.
#[derive(Debug)]
pub struct Schema {
    pub tables: &'static [TableSchema],
    pub layers: &'static [&'static str],
    /// Tables that accept additions during an emergency.
    pub pending: &'static [&'static str],
    pub grid: Option<Grid>,
    pub decision_fields: &'static [&'static str],
}

impl Schema {
    pub fn table(&self, name: &str) -> Option<&TableSchema> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Every readable state field: table id lists, table columns, layers,
    /// pending lists and the grid.
    pub fn state_fields(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for t in self.tables {
            out.insert(t.name.to_owned());
            for (f, _) in t.fields {
                out.insert(format!("{}.{}", t.name, f));
            }
        }
        for l in self.layers {
            out.insert((*l).to_owned());
        }
        for p in self.pending {
            out.insert(format!("pending_{p}"));
        }
        if self.grid.is_some() {
            out.insert("grid".to_owned());
        }
        out
    }

    pub fn decision_field_set(&self) -> BTreeSet<String> {
        self.decision_fields.iter().map(|s| (*s).to_owned()).collect()
    }

    /// State fields read by each host capability.
    pub fn capability_fields(&self) -> BTreeMap<String, BTreeSet<String>> {
        let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let one = |f: String| BTreeSet::from([f]);
        out.insert("read_clock".into(), BTreeSet::new());
        for t in self.tables {
            out.insert(format!("read_{}_ids", t.singular), one(t.name.to_owned()));
            for (f, _) in t.fields {
                out.insert(format!("read_{}_{}", t.singular, f), one(format!("{}.{}", t.name, f)));
            }
        }
        for l in self.layers {
            out.insert(format!("read_{l}"), one((*l).to_owned()));
        }
        for p in self.pending {
            out.insert(format!("read_pending_{p}"), one(format!("pending_{p}")));
        }
        if self.grid.is_some() {
            for c in ["grid_width", "grid_height", "shortest_path"] {
                out.insert(c.into(), one("grid".into()));
            }
        }
        out
    }
}

pub type Entity = BTreeMap<String, Value>;

/// Scenario state `s_t`. `clock` is the scenario time at which the state
/// was observed; `plan` is the schedule currently in force, if known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub scenario: ScenarioId,
    pub clock: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
    pub tables: BTreeMap<String, BTreeMap<i64, Entity>>,
    #[serde(default)]
    pub layers: BTreeMap<String, Vec<Rect>>,
    #[serde(default)]
    pub pending: BTreeMap<String, Vec<Entity>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<Value>,
}

impl SystemState {
    pub fn empty(scenario: ScenarioId) -> Self {
        let schema = scenario_of(scenario).schema();
        SystemState {
            scenario,
            clock: 0,
            grid: schema.grid,
            tables: schema.tables.iter().map(|t| (t.name.to_owned(), BTreeMap::new())).collect(),
            layers: schema.layers.iter().map(|l| ((*l).to_owned(), Vec::new())).collect(),
            pending: schema.pending.iter().map(|p| ((*p).to_owned(), Vec::new())).collect(),
            plan: None,
        }
    }

    pub fn with_clock(mut self, clock: i64) -> Self {
        self.clock = clock;
        self
    }

    pub fn insert(&mut self, table: &str, id: i64, fields: impl IntoIterator<Item = (&'static str, Value)>) {
        self.tables
            .entry(table.to_owned())
            .or_default()
            .insert(id, fields.into_iter().map(|(k, v)| (k.to_owned(), v)).collect());
    }

    pub fn ids(&self, table: &str) -> Vec<i64> {
        self.tables.get(table).map(|t| t.keys().copied().collect()).unwrap_or_default()
    }

    pub fn entity(&self, table: &str, id: i64) -> Option<&Entity> {
        self.tables.get(table)?.get(&id)
    }

    pub fn get(&self, table: &str, id: i64, field: &str) -> Option<&Value> {
        self.entity(table, id)?.get(field)
    }

    pub fn int(&self, table: &str, id: i64, field: &str) -> Option<i64> {
        self.get(table, id, field)?.as_int()
    }

    pub fn flag(&self, table: &str, id: i64, field: &str) -> Option<bool> {
        self.get(table, id, field)?.as_bool()
    }

    pub fn cell(&self, table: &str, id: i64, field: &str) -> Option<Cell> {
        self.get(table, id, field)?.as_coord()
    }

    pub fn kind(&self, table: &str, id: i64, field: &str) -> Option<&str> {
        match self.get(table, id, field)? {
            Value::Ident(k) => Some(k),
            _ => None,
        }
    }

    pub fn layer(&self, name: &str) -> &[Rect] {
        self.layers.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn pending(&self, table: &str) -> &[Entity] {
        self.pending.get(table).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Union of the cells of the named layers.
    pub fn blocked(&self, layers: &[&str]) -> BTreeSet<Cell> {
        layers.iter().flat_map(|l| self.layer(l).iter().flat_map(Rect::cells)).collect()
    }

    /// Smallest id not used by the table or its pending additions.
    pub fn next_id(&self, table: &str) -> i64 {
        let base = self.ids(table).into_iter().max().unwrap_or(0);
        let pend = self.pending(table).iter().filter_map(|e| e.get("id").and_then(Value::as_int)).max().unwrap_or(0);
        base.max(pend) + 1
    }

    /// Short textual rendering, bounded by `limit` characters.
    pub fn digest(&self, limit: usize) -> String {
        let mut out = format!("{} t={}", self.scenario, self.clock);
        if let Some(g) = self.grid {
            out.push_str(&format!(" grid={}x{}", g.width, g.height));
        }
        out.push('\n');
        for (name, rows) in &self.tables {
            for (id, e) in rows {
                let fields: Vec<String> = e.iter().map(|(k, v)| format!("{k}={v}")).collect();
                out.push_str(&format!("{name}#{id} {}\n", fields.join(" ")));
            }
        }
        for (name, rects) in &self.layers {
            if !rects.is_empty() {
                let rs: Vec<String> =
                    rects.iter().map(|r| format!("({},{})-({},{})", r.lo.0, r.lo.1, r.hi.0, r.hi.1)).collect();
                out.push_str(&format!("{name}: {}\n", rs.join(" ")));
            }
        }
        for (name, rows) in &self.pending {
            for e in rows {
                let fields: Vec<String> = e.iter().map(|(k, v)| format!("{k}={v}")).collect();
                out.push_str(&format!("pending {name} {}\n", fields.join(" ")));
            }
        }
        if out.chars().count() > limit {
            out = out.chars().take(limit.saturating_sub(3)).collect();
            out.push_str("...");
        }
        out
    }
}

/// One structured change carried by an emergency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "change", rename_all = "snake_case")]
pub enum Change {
    /// Resource can no longer be assigned.
    Unavailable { entity: String, id: i64 },
    /// Entity moves to a new cell.
    Relocated { entity: String, id: i64, cell: Cell },
    /// A scalar attribute changes.
    ValueChanged { entity: String, id: i64, field: String, value: Value },
    /// A rectangle is added to a blocking layer.
    Blocked { layer: String, lo: Cell, hi: Cell },
    /// A new entity appears (for example an urgent task).
    Added { entity: String, record: Entity },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    pub category: String,
    #[serde(flatten)]
    pub change: Change,
}

impl Fact {
    pub fn new(category: &str, change: Change) -> Self {
        Fact { category: category.to_owned(), change }
    }

    /// State field this fact modifies.
    pub fn touched_field(&self) -> String {
        match &self.change {
            Change::Unavailable { entity, .. } => format!("{entity}.available"),
            Change::Relocated { entity, .. } => format!("{entity}.cell"),
            Change::ValueChanged { entity, field, .. } => format!("{entity}.{field}"),
            Change::Blocked { layer, .. } => layer.clone(),
            Change::Added { entity, .. } => format!("pending_{entity}"),
        }
    }

    /// Flat record view used to fill rewrite templates.
    pub fn params(&self) -> Value {
        let mut m = BTreeMap::new();
        m.insert("category".to_owned(), Value::Text(self.category.clone()));
        match &self.change {
            Change::Unavailable { entity, id } => {
                m.insert("entity".into(), Value::Text(entity.clone()));
                m.insert("id".into(), Value::Int(*id));
            }
            Change::Relocated { entity, id, cell } => {
                m.insert("entity".into(), Value::Text(entity.clone()));
                m.insert("id".into(), Value::Int(*id));
                m.insert("cell".into(), Value::Coord(cell.0, cell.1));
            }
            Change::ValueChanged { entity, id, field, value } => {
                m.insert("entity".into(), Value::Text(entity.clone()));
                m.insert("id".into(), Value::Int(*id));
                m.insert("field".into(), Value::Text(field.clone()));
                m.insert("value".into(), value.clone());
            }
            Change::Blocked { layer, lo, hi } => {
                let r = Rect::new(*lo, *hi);
                m.insert("layer".into(), Value::Text(layer.clone()));
                m.insert("lo".into(), Value::Coord(r.lo.0, r.lo.1));
                m.insert("hi".into(), Value::Coord(r.hi.0, r.hi.1));
            }
            Change::Added { entity, record } => {
                m.insert("entity".into(), Value::Text(entity.clone()));
                m.insert("record".into(), Value::Record(record.clone()));
            }
        }
        Value::Record(m)
    }
}

/// Emergency event `e_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Emergency {
    pub id: String,
    pub scenario: ScenarioId,
    pub category: String,
    pub narrative: String,
    pub facts: Vec<Fact>,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmergencyCase {
    pub schema_version: u32,
    pub id: String,
    pub seed: u64,
    #[serde(default)]
    pub golden: bool,
    pub state: SystemState,
    pub emergency: Emergency,
    pub impactful: bool,
    pub affected_labels: BTreeSet<String>,
}

impl EmergencyCase {
    pub fn scenario(&self) -> ScenarioId {
        self.state.scenario
    }

    pub fn category(&self) -> &str {
        &self.emergency.category
    }

    /// Post-emergency state.
    pub fn truth(&self) -> Result<SystemState, SimError> {
        apply_emergency(&self.state, &self.emergency)
    }
}

/// Named oracle assertion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Assertion {
    MalformedDecision,
    InvalidTask,
    InactiveTask,
    DuplicateTask,
    InvalidResource,
    UnavailableResource,
    KindMismatch,
    ResourceReused,
    EmptyRoute,
    RouteStart,
    RouteEnd,
    MissedPickup,
    RouteDiscontinuous,
    OffGrid,
    BlockedCell,
    RangeExceeded,
    PriorityOrder,
    UnservedTask,
    StartBeforeArrival,
    HandlingTooShort,
    BerthWindow,
    BerthTooShort,
    BerthDoubleBooked,
}

impl Assertion {
    pub fn as_str(self) -> &'static str {
        match self {
            Assertion::MalformedDecision => "malformed-decision",
            Assertion::InvalidTask => "invalid-task",
            Assertion::InactiveTask => "inactive-task",
            Assertion::DuplicateTask => "duplicate-task",
            Assertion::InvalidResource => "invalid-resource",
            Assertion::UnavailableResource => "unavailable-resource",
            Assertion::KindMismatch => "kind-mismatch",
            Assertion::ResourceReused => "resource-reused",
            Assertion::EmptyRoute => "empty-route",
            Assertion::RouteStart => "route-start",
            Assertion::RouteEnd => "route-end",
            Assertion::MissedPickup => "missed-pickup",
            Assertion::RouteDiscontinuous => "route-discontinuous",
            Assertion::OffGrid => "off-grid",
            Assertion::BlockedCell => "blocked-cell",
            Assertion::RangeExceeded => "range-exceeded",
            Assertion::PriorityOrder => "priority-order",
            Assertion::UnservedTask => "unserved-task",
            Assertion::StartBeforeArrival => "start-before-arrival",
            Assertion::HandlingTooShort => "handling-too-short",
            Assertion::BerthWindow => "berth-window",
            Assertion::BerthTooShort => "berth-too-short",
            Assertion::BerthDoubleBooked => "berth-double-booked",
        }
    }
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Oracle verdict; a failure names the first violated assertion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail { assertion: Assertion, detail: String },
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn fail(assertion: Assertion, detail: impl Into<String>) -> Self {
        Verdict::Fail { assertion, detail: detail.into() }
    }

    pub fn assertion(&self) -> Option<Assertion> {
        match self {
            Verdict::Pass => None,
            Verdict::Fail { assertion, .. } => Some(*assertion),
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass => write!(f, "pass"),
            Verdict::Fail { assertion, detail } => write!(f, "fail({assertion}): {detail}"),
        }
    }
}

/// Behaviour that differs between scenarios.
pub trait Scenario: Send + Sync {
    fn id(&self) -> ScenarioId;
    fn schema(&self) -> &'static Schema;
    fn categories(&self) -> &'static [&'static str];
    /// Hand-authored reference state (also the golden-case state).
    fn base_state(&self) -> SystemState;
    /// Random initial state; may be infeasible, callers filter.
    fn random_state(&self, rng: &mut ChaCha8Rng) -> SystemState;
    /// Facts for one emergency of `category`, given a state whose `plan` is set.
    fn sample_facts(&self, category: &str, state: &SystemState, rng: &mut ChaCha8Rng) -> Option<Vec<Fact>>;
    fn check_feasible(&self, state: &SystemState, decision: &Value) -> Verdict;
    /// One sentence describing `fact` in `state`.
    fn narrate(&self, fact: &Fact, state: &SystemState) -> String;
}

pub fn scenario_of(id: ScenarioId) -> &'static dyn Scenario {
    match id {
        ScenarioId::Port => &port::Port,
        ScenarioId::Warehouse => &warehouse::Warehouse,
        ScenarioId::Deck => &deck::Deck,
    }
}

pub fn check_feasible(state: &SystemState, decision: &Value) -> Verdict {
    scenario_of(state.scenario).check_feasible(state, decision)
}

pub fn narrative(facts: &[Fact], state: &SystemState) -> String {
    let s = scenario_of(state.scenario);
    facts.iter().map(|f| s.narrate(f, state)).collect::<Vec<_>>().join(" ")
}

/// Post-emergency state. The input is not modified.
pub fn apply_emergency(state: &SystemState, e: &Emergency) -> Result<SystemState, SimError> {
    if e.scenario != state.scenario {
        return Err(SimError::ScenarioMismatch { expected: state.scenario, got: e.scenario });
    }
    apply_facts(state, &e.facts)
}

pub fn apply_facts(state: &SystemState, facts: &[Fact]) -> Result<SystemState, SimError> {
    let mut out = state.clone();
    for f in facts {
        apply_fact(&mut out, f)?;
    }
    Ok(out)
}

fn apply_fact(state: &mut SystemState, fact: &Fact) -> Result<(), SimError> {
    let schema = scenario_of(state.scenario).schema();
    let table = |name: &str| schema.table(name).ok_or_else(|| SimError::UnknownField(name.to_owned()));
    let dangling = |entity: &str, id: i64| SimError::DanglingEntity { entity: entity.to_owned(), id };
    match &fact.change {
        Change::Unavailable { entity, id } => {
            if table(entity)?.field("available").is_none() {
                return Err(SimError::UnknownField(format!("{entity}.available")));
            }
            let e = entity_mut(state, entity, *id).ok_or_else(|| dangling(entity, *id))?;
            e.insert("available".into(), Value::Bool(false));
        }
        Change::Relocated { entity, id, cell } => {
            let exclusive = table(entity)?.exclusive_cells;
            if table(entity)?.field("cell").is_none() {
                return Err(SimError::UnknownField(format!("{entity}.cell")));
            }
            if let Some(g) = state.grid {
                if !g.contains(*cell) {
                    return Err(SimError::OffGrid(*cell));
                }
            }
            if state.entity(entity, *id).is_none() {
                return Err(dangling(entity, *id));
            }
            let clash = state.tables[entity.as_str()]
                .iter()
                .any(|(other, e)| *other != *id && e.get("cell") == Some(&Value::Coord(cell.0, cell.1)));
            if clash && exclusive {
                return Err(SimError::Occupied(*cell));
            }
            let e = entity_mut(state, entity, *id).ok_or_else(|| dangling(entity, *id))?;
            e.insert("cell".into(), Value::Coord(cell.0, cell.1));
        }
        Change::ValueChanged { entity, id, field, value } => {
            let kind =
                table(entity)?.field(field).ok_or_else(|| SimError::UnknownField(format!("{entity}.{field}")))?;
            if !kind.admits(value) {
                return Err(SimError::InvalidFact(format!("{entity}.{field} cannot hold {}", value.type_name())));
            }
            let e = entity_mut(state, entity, *id).ok_or_else(|| dangling(entity, *id))?;
            e.insert(field.clone(), value.clone());
        }
        Change::Blocked { layer, lo, hi } => {
            if !schema.layers.contains(&layer.as_str()) {
                return Err(SimError::UnknownField(layer.clone()));
            }
            let r = Rect::new(*lo, *hi);
            if let Some(g) = state.grid {
                if !g.contains_rect(&r) {
                    return Err(SimError::OffGrid(if g.contains(r.lo) { r.hi } else { r.lo }));
                }
            }
            state.layers.entry(layer.clone()).or_default().push(r);
        }
        Change::Added { entity, record } => {
            let t = table(entity)?;
            if !schema.pending.contains(&entity.as_str()) {
                return Err(SimError::InvalidFact(format!("{entity} does not accept additions")));
            }
            let id = record
                .get("id")
                .and_then(Value::as_int)
                .ok_or_else(|| SimError::InvalidFact("added record lacks an integer id".into()))?;
            if state.entity(entity, id).is_some()
                || state.pending(entity).iter().any(|e| e.get("id") == Some(&Value::Int(id)))
            {
                return Err(SimError::InvalidFact(format!("{} {id} already exists", t.singular)));
            }
            for (k, v) in record {
                if k == "id" {
                    continue;
                }
                match t.field(k) {
                    Some(kind) if kind.admits(v) => {}
                    _ => return Err(SimError::UnknownField(format!("{entity}.{k}"))),
                }
            }
            if let (Some(g), Some(Value::Coord(x, y))) = (state.grid, record.get("cell")) {
                if !g.contains((*x, *y)) {
                    return Err(SimError::OffGrid((*x, *y)));
                }
            }
            state.pending.entry(entity.clone()).or_default().push(record.clone());
        }
    }
    Ok(())
}

fn entity_mut<'s>(state: &'s mut SystemState, table: &str, id: i64) -> Option<&'s mut Entity> {
    state.tables.get_mut(table)?.get_mut(&id)
}

fn rect_value(r: &Rect) -> Value {
    Value::record([("lo", Value::Coord(r.lo.0, r.lo.1)), ("hi", Value::Coord(r.hi.0, r.hi.1))])
}

/// Host capabilities reading `state`: one reader per state field plus grid
/// helpers. Every reader is a pure function of the state and its arguments.
pub fn host_capabilities(state: Arc<SystemState>) -> CapabilityTable {
    let schema = scenario_of(state.scenario).schema();
    let mut caps = CapabilityTable::new();
    {
        let st = state.clone();
        caps.host("read_clock", move |_| Ok(Value::Int(st.clock)));
    }
    for t in schema.tables {
        let st = state.clone();
        caps.host(&format!("read_{}_ids", t.singular), move |_| {
            Ok(Value::List(st.ids(t.name).into_iter().map(Value::Int).collect()))
        });
        for (f, _) in t.fields {
            let st = state.clone();
            caps.host(&format!("read_{}_{}", t.singular, f), move |args| {
                let id = match args {
                    [Value::Int(id)] => *id,
                    _ => return Err(format!("expected one integer {} id", t.singular)),
                };
                st.get(t.name, id, f).cloned().ok_or_else(|| format!("no {} with id {id}", t.singular))
            });
        }
    }
    for l in schema.layers {
        let st = state.clone();
        caps.host(&format!("read_{l}"), move |_| Ok(Value::List(st.layer(l).iter().map(rect_value).collect())));
    }
    for p in schema.pending {
        let st = state.clone();
        caps.host(&format!("read_pending_{p}"), move |_| {
            Ok(Value::List(st.pending(p).iter().cloned().map(Value::Record).collect()))
        });
    }
    if let Some(g) = state.grid {
        caps.host("grid_width", move |_| Ok(Value::Int(g.width)));
        caps.host("grid_height", move |_| Ok(Value::Int(g.height)));
        caps.host("shortest_path", move |args| {
            let (from, to, blocked) = match args {
                [Value::Coord(a, b), Value::Coord(c, d), Value::List(cells)] => ((*a, *b), (*c, *d), cells),
                _ => return Err("expected (coord, coord, list[coord])".into()),
            };
            for c in [from, to] {
                if !g.contains(c) {
                    return Err(format!("cell ({}, {}) is outside the grid", c.0, c.1));
                }
            }
            let blocked: BTreeSet<Cell> = blocked.iter().filter_map(Value::as_coord).collect();
            Ok(Value::List(g.shortest_path(from, to, &blocked).into_iter().map(|(x, y)| Value::Coord(x, y)).collect()))
        });
    }
    caps
}

// Decision decoding helpers shared by the oracles.

pub(crate) fn field<'v>(rec: &'v Value, name: &str) -> Result<&'v Value, String> {
    rec.field(name).ok_or_else(|| format!("missing field '{name}'"))
}

pub(crate) fn int_field(rec: &Value, name: &str) -> Result<i64, String> {
    field(rec, name)?.as_int().ok_or_else(|| format!("field '{name}' is not an int"))
}

pub(crate) fn list_field<'v>(rec: &'v Value, name: &str) -> Result<&'v [Value], String> {
    field(rec, name)?.as_list().ok_or_else(|| format!("field '{name}' is not a list"))
}

pub(crate) fn cells_field(rec: &Value, name: &str) -> Result<Vec<Cell>, String> {
    list_field(rec, name)?
        .iter()
        .map(|c| c.as_coord().ok_or_else(|| format!("'{name}' holds a non-coordinate")))
        .collect()
}

/// Checks a route cell by cell: start, end, grid bounds, contiguity,
/// blocked cells and length budget, in that order.
pub(crate) fn check_route(
    grid: Grid,
    route: &[Cell],
    start: Cell,
    end: Cell,
    blocked: &BTreeSet<Cell>,
    range: i64,
    who: &str,
) -> Verdict {
    let (Some(first), Some(last)) = (route.first(), route.last()) else {
        return Verdict::fail(Assertion::EmptyRoute, format!("{who} has an empty route"));
    };
    if *first != start {
        return Verdict::fail(Assertion::RouteStart, format!("{who} route starts at {first:?}, expected {start:?}"));
    }
    if *last != end {
        return Verdict::fail(Assertion::RouteEnd, format!("{who} route ends at {last:?}, expected {end:?}"));
    }
    if let Some(c) = route.iter().find(|c| !grid.contains(**c)) {
        return Verdict::fail(Assertion::OffGrid, format!("{who} route leaves the grid at {c:?}"));
    }
    if let Some(w) = route.windows(2).find(|w| !adjacent(w[0], w[1])) {
        return Verdict::fail(
            Assertion::RouteDiscontinuous,
            format!("{who} route jumps from {:?} to {:?}", w[0], w[1]),
        );
    }
    if let Some(c) = route.iter().find(|c| blocked.contains(c)) {
        return Verdict::fail(Assertion::BlockedCell, format!("{who} route crosses blocked cell {c:?}"));
    }
    let steps = route.len() as i64 - 1;
    if steps > range {
        return Verdict::fail(Assertion::RangeExceeded, format!("{who} route needs {steps} steps, range is {range}"));
    }
    Verdict::Pass
}

/// Picks a free grid cell not in `avoid`, uniformly at random.
pub(crate) fn random_free_cell(grid: Grid, avoid: &BTreeSet<Cell>, rng: &mut ChaCha8Rng) -> Option<Cell> {
    use rand::Rng;
    for _ in 0..400 {
        let c = (rng.random_range(0..grid.width), rng.random_range(0..grid.height));
        if !avoid.contains(&c) {
            return Some(c);
        }
    }
    None
}

#[cfg(test)]
mod tests;

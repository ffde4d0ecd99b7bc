//! The atomic function library: versioned functions with specifications,
//! validation-gated commits and an append-only history.

mod builtin;
mod planner;
mod trial;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::afdsl::{self, FunctionAst, Namespace, Origin, ParseError, SourceText};
use crate::simworld::{scenario_of, ScenarioId, SystemState};

pub use planner::{run_plan, run_plan_with, PlanRun, PLAN_STEP_BUDGET};
pub use trial::{base_probes, episode_probe, trial_execute, ProbeCase, ProbeOutcome, ProbeVerdict, VerdictReport};

/// Name of the entry point every library must define.
pub const ENTRY_POINT: &str = "plan";

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("{name}: parse error at {err}")]
    Parse { name: String, err: ParseError },
    #[error("{name}: {message}")]
    Spec { name: String, message: String },
    #[error("duplicate function '{0}'")]
    Duplicate(String),
    #[error("library directory {0} holds no functions")]
    Empty(String),
    #[error("call cycle through '{0}'")]
    Cycle(String),
    #[error("unknown function '{0}'")]
    UnknownFunction(String),
    #[error("commit rejected: {0}")]
    Rejected(String),
    #[error("scenario mismatch: library is {expected}, got {got}")]
    ScenarioMismatch { expected: ScenarioId, got: ScenarioId },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Specification `f_s` attached to one function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub name: String,
    pub summary: String,
    pub reads: BTreeSet<String>,
    pub writes: BTreeSet<String>,
    pub keywords: BTreeSet<String>,
    pub scenario: ScenarioId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicFunction {
    pub name: String,
    /// Zero for an uncommitted candidate.
    pub version: u32,
    pub source: SourceText,
    pub ast: Arc<FunctionAst>,
    pub spec: FunctionSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub name: String,
    pub version: u32,
    pub source: String,
    pub timestamp: i64,
    pub provenance: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommitOutcome {
    /// Byte-identical source; nothing changed.
    Unchanged,
    Inserted,
    Revised(u32),
}

/// The library `D_A` for one scenario.
#[derive(Debug, Clone)]
pub struct FunctionLibrary {
    scenario: ScenarioId,
    entries: BTreeMap<String, Arc<AtomicFunction>>,
    history: Vec<HistoryRecord>,
}

/// Host capability names of a scenario.
pub fn host_namespace(scenario: ScenarioId) -> Namespace {
    Namespace::new(scenario_of(scenario).schema().capability_fields().into_keys())
}

/// State fields a function reads through the host capabilities it calls.
pub fn derive_reads(ast: &FunctionAst, scenario: ScenarioId) -> BTreeSet<String> {
    let fields = scenario_of(scenario).schema().capability_fields();
    ast.callees().iter().filter_map(|c| fields.get(c)).flatten().cloned().collect()
}

impl FunctionLibrary {
    /// Builds a library from `(name, source)` pairs and one spec per name.
    /// Every source must parse against the host capabilities plus the other
    /// library names, and every spec must match its function.
    pub fn from_sources(
        scenario: ScenarioId,
        sources: &[(String, String)],
        specs: Vec<FunctionSpec>,
        history: Option<Vec<HistoryRecord>>,
    ) -> Result<Self, LibraryError> {
        if sources.is_empty() {
            return Err(LibraryError::Empty(scenario.to_string()));
        }
        let mut ns = host_namespace(scenario);
        let mut seen = BTreeSet::new();
        for (name, text) in sources {
            let ast = afdsl::parse_unresolved(text).map_err(|err| LibraryError::Parse { name: name.clone(), err })?;
            if ast.name != *name {
                return Err(LibraryError::Spec {
                    name: name.clone(),
                    message: format!("file declares function '{}'", ast.name),
                });
            }
            if !seen.insert(ast.name.clone()) {
                return Err(LibraryError::Duplicate(ast.name));
            }
            ns.insert(ast.name);
        }
        let mut specs_by_name = BTreeMap::new();
        for s in specs {
            if specs_by_name.insert(s.name.clone(), s.clone()).is_some() {
                return Err(LibraryError::Duplicate(s.name));
            }
        }
        let mut entries = BTreeMap::new();
        for (name, text) in sources {
            let ast = afdsl::parse(text, &ns).map_err(|err| LibraryError::Parse { name: name.clone(), err })?;
            let spec = specs_by_name
                .remove(name)
                .ok_or_else(|| LibraryError::Spec { name: name.clone(), message: "no spec record".into() })?;
            validate_spec(scenario, &ast, &spec)?;
            let source = afdsl::canonical(&ast, Origin::Library);
            entries.insert(
                name.clone(),
                Arc::new(AtomicFunction { name: name.clone(), version: 1, source, ast: Arc::new(ast), spec }),
            );
        }
        if let Some(name) = specs_by_name.into_keys().next() {
            return Err(LibraryError::Spec { name, message: "spec record without a function".into() });
        }
        if !entries.contains_key(ENTRY_POINT) {
            return Err(LibraryError::UnknownFunction(ENTRY_POINT.into()));
        }
        let mut lib = FunctionLibrary { scenario, entries, history: Vec::new() };
        lib.check_acyclic()?;
        match history {
            Some(h) if !h.is_empty() => {
                lib.history = h;
                let replayed = lib.replay_sources();
                for (name, e) in lib.entries.iter_mut() {
                    match replayed.get(name) {
                        Some((v, src)) if *src == e.source.text => Arc::make_mut(e).version = *v,
                        _ => {
                            return Err(LibraryError::Spec {
                                name: name.clone(),
                                message: "history does not reproduce the current source".into(),
                            })
                        }
                    }
                }
            }
            _ => {
                lib.history = lib
                    .entries
                    .values()
                    .map(|e| HistoryRecord {
                        name: e.name.clone(),
                        version: 1,
                        source: e.source.text.clone(),
                        timestamp: 0,
                        provenance: "fixture".into(),
                    })
                    .collect();
            }
        }
        Ok(lib)
    }

    /// The shipped fixture library of a scenario.
    pub fn builtin(scenario: ScenarioId) -> Self {
        let (sources, specs) = builtin::fixture(scenario);
        let specs = parse_specs(specs).expect("fixture specs are valid JSONL");
        let sources: Vec<(String, String)> = sources.iter().map(|(n, s)| ((*n).to_owned(), (*s).to_owned())).collect();
        FunctionLibrary::from_sources(scenario, &sources, specs, None)
            .unwrap_or_else(|e| panic!("fixture library for {scenario} is invalid: {e}"))
    }

    pub fn scenario(&self) -> ScenarioId {
        self.scenario
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&AtomicFunction> {
        self.entries.get(name).map(Arc::as_ref)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn functions(&self) -> impl Iterator<Item = &AtomicFunction> {
        self.entries.values().map(Arc::as_ref)
    }

    pub fn specs(&self) -> Vec<FunctionSpec> {
        self.functions().map(|f| f.spec.clone()).collect()
    }

    pub fn history(&self) -> &[HistoryRecord] {
        &self.history
    }

    /// Names callable from a library function.
    pub fn namespace(&self) -> Namespace {
        let mut ns = host_namespace(self.scenario);
        for n in self.entries.keys() {
            ns.insert(n.clone());
        }
        ns
    }

    /// Functions whose spec reads `field`.
    pub fn readers(&self, field: &str) -> Vec<String> {
        self.functions().filter(|f| f.spec.reads.contains(field)).map(|f| f.name.clone()).collect()
    }

    /// Parses `text` as a revision of (or addition to) the library. The
    /// result is canonical and carries a spec whose reads are recomputed.
    pub fn prepare(&self, text: &str, origin: Origin) -> Result<AtomicFunction, LibraryError> {
        let probe =
            afdsl::parse_unresolved(text).map_err(|err| LibraryError::Parse { name: "<candidate>".into(), err })?;
        let mut ns = self.namespace();
        ns.insert(probe.name.clone());
        let ast = afdsl::parse(text, &ns).map_err(|err| LibraryError::Parse { name: probe.name.clone(), err })?;
        let reads = derive_reads(&ast, self.scenario);
        let spec = match self.get(&ast.name) {
            Some(existing) => FunctionSpec { reads, ..existing.spec.clone() },
            None => FunctionSpec {
                name: ast.name.clone(),
                summary: if ast.doc.is_empty() { ast.name.replace('_', " ") } else { ast.doc.join(" ") },
                reads,
                writes: BTreeSet::new(),
                keywords: ast.name.split('_').map(str::to_owned).collect(),
                scenario: self.scenario,
            },
        };
        Ok(AtomicFunction {
            name: ast.name.clone(),
            version: 0,
            source: afdsl::canonical(&ast, origin),
            ast: Arc::new(ast),
            spec,
        })
    }

    /// Copy of the library with `candidate` substituted, for trial runs.
    pub fn with_candidate(&self, candidate: &AtomicFunction) -> FunctionLibrary {
        let mut lib = self.clone();
        lib.entries.insert(candidate.name.clone(), Arc::new(candidate.clone()));
        lib
    }

    /// Commits a validated candidate. Identical source is a no-op; a known
    /// name gets the next version; a new name is inserted at version 1.
    pub fn commit(
        &mut self,
        candidate: &AtomicFunction,
        verdict: &VerdictReport,
        timestamp: i64,
        provenance: &str,
    ) -> Result<CommitOutcome, LibraryError> {
        if !verdict.pass {
            return Err(LibraryError::Rejected(verdict.summary()));
        }
        if candidate.spec.scenario != self.scenario {
            return Err(LibraryError::ScenarioMismatch { expected: self.scenario, got: candidate.spec.scenario });
        }
        let reparsed = afdsl::parse(&candidate.source.text, &{
            let mut ns = self.namespace();
            ns.insert(candidate.name.clone());
            ns
        })
        .map_err(|err| LibraryError::Parse { name: candidate.name.clone(), err })?;
        if reparsed != *candidate.ast {
            return Err(LibraryError::Spec {
                name: candidate.name.clone(),
                message: "source is not the canonical text of the tree".into(),
            });
        }
        validate_spec(self.scenario, &candidate.ast, &candidate.spec)?;
        let version = match self.get(&candidate.name) {
            Some(cur) if cur.source.text == candidate.source.text => return Ok(CommitOutcome::Unchanged),
            Some(cur) => cur.version + 1,
            None => 1,
        };
        let next = self.with_candidate(&AtomicFunction { version, ..candidate.clone() });
        next.check_acyclic()?;
        self.entries = next.entries;
        self.history.push(HistoryRecord {
            name: candidate.name.clone(),
            version,
            source: candidate.source.text.clone(),
            timestamp,
            provenance: provenance.to_owned(),
        });
        Ok(if version == 1 { CommitOutcome::Inserted } else { CommitOutcome::Revised(version) })
    }

    /// Highest-version source of every name, rebuilt from the history.
    pub fn replay_sources(&self) -> BTreeMap<String, (u32, String)> {
        let mut out: BTreeMap<String, (u32, String)> = BTreeMap::new();
        for h in &self.history {
            match out.get(&h.name) {
                Some((v, _)) if *v >= h.version => {}
                _ => {
                    out.insert(h.name.clone(), (h.version, h.source.clone()));
                }
            }
        }
        out
    }

    fn check_acyclic(&self) -> Result<(), LibraryError> {
        // Depth-first search with colours; library calls only.
        fn visit(lib: &FunctionLibrary, name: &str, state: &mut BTreeMap<String, u8>) -> Result<(), LibraryError> {
            match state.get(name) {
                Some(2) => return Ok(()),
                Some(1) => return Err(LibraryError::Cycle(name.to_owned())),
                _ => {}
            }
            state.insert(name.to_owned(), 1);
            if let Some(f) = lib.get(name) {
                for c in f.ast.callees() {
                    if lib.entries.contains_key(&c) {
                        visit(lib, &c, state)?;
                    }
                }
            }
            state.insert(name.to_owned(), 2);
            Ok(())
        }
        let mut state = BTreeMap::new();
        for name in self.entries.keys() {
            visit(self, name, &mut state)?;
        }
        Ok(())
    }

    /// Writes `<name>.afn` files, `specs.jsonl` and `history.jsonl`.
    pub fn save(&self, dir: &Path) -> Result<(), LibraryError> {
        fs::create_dir_all(dir)?;
        for f in self.functions() {
            fs::write(dir.join(format!("{}.afn", f.name)), &f.source.text)?;
        }
        let mut specs = fs::File::create(dir.join("specs.jsonl"))?;
        for f in self.functions() {
            writeln!(specs, "{}", serde_json::to_string(&f.spec)?)?;
        }
        let mut hist = fs::File::create(dir.join("history.jsonl"))?;
        for h in &self.history {
            writeln!(hist, "{}", serde_json::to_string(h)?)?;
        }
        Ok(())
    }
}

fn validate_spec(scenario: ScenarioId, ast: &FunctionAst, spec: &FunctionSpec) -> Result<(), LibraryError> {
    let err = |message: String| LibraryError::Spec { name: ast.name.clone(), message };
    if spec.name != ast.name {
        return Err(err(format!("spec names '{}'", spec.name)));
    }
    if spec.scenario != scenario {
        return Err(err(format!("spec belongs to {}", spec.scenario)));
    }
    if spec.keywords.is_empty() {
        return Err(err("spec has no keywords".into()));
    }
    let schema = scenario_of(scenario).schema();
    let fields = schema.state_fields();
    if let Some(f) = spec.reads.iter().find(|f| !fields.contains(*f)) {
        return Err(err(format!("reads unknown state field '{f}'")));
    }
    let decision = schema.decision_field_set();
    if let Some(f) = spec.writes.iter().find(|f| !decision.contains(*f)) {
        return Err(err(format!("writes unknown decision field '{f}'")));
    }
    let derived = derive_reads(ast, scenario);
    if derived != spec.reads {
        return Err(err(format!("spec reads {:?} but the body reads {:?}", spec.reads, derived)));
    }
    Ok(())
}

fn parse_specs(text: &str) -> Result<Vec<FunctionSpec>, LibraryError> {
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).map_err(LibraryError::from)).collect()
}

/// Loads `<dir>/*.afn`, `<dir>/specs.jsonl` and, when present,
/// `<dir>/history.jsonl`.
pub fn load_library(scenario: ScenarioId, dir: &Path) -> Result<FunctionLibrary, LibraryError> {
    let mut sources = Vec::new();
    if dir.is_dir() {
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "afn"))
            .collect();
        paths.sort();
        for p in paths {
            let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
            sources.push((name, fs::read_to_string(&p)?));
        }
    }
    if sources.is_empty() {
        return Err(LibraryError::Empty(dir.display().to_string()));
    }
    let specs = parse_specs(&fs::read_to_string(dir.join("specs.jsonl"))?)?;
    let hist_path = dir.join("history.jsonl");
    let history = if hist_path.exists() {
        Some(
            fs::read_to_string(hist_path)?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(serde_json::from_str)
                .collect::<Result<Vec<HistoryRecord>, _>>()?,
        )
    } else {
        None
    };
    FunctionLibrary::from_sources(scenario, &sources, specs, history)
}

/// Shorthand for the running state's plan under `lib`.
pub fn current_plan(lib: &FunctionLibrary, state: &SystemState) -> Option<crate::afdsl::Value> {
    run_plan(lib, state).result.ok()
}

#[cfg(test)]
mod tests;

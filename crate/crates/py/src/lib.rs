//! Python module `mafig`: libraries, case runs, and the span-focused
//! distillation helpers.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use mafig_core::harness::{load_cases, run_suite, Backends, RunConfig};
use mafig_core::library::FunctionLibrary;
use mafig_core::perception::{localization_loss as loc_loss, LossForm};
use mafig_core::sfl::{self, EmbeddingStats, StatsMode, SupervisionTarget, Tokenizer, WordPunct};
use mafig_core::simworld::ScenarioId;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn scenario(name: &str) -> PyResult<ScenarioId> {
    name.parse().map_err(err)
}

/// One scenario's atomic function library.
#[pyclass(name = "Library")]
pub struct PyLibrary {
    inner: FunctionLibrary,
}

#[pymethods]
impl PyLibrary {
    #[new]
    fn new(scenario_name: &str) -> PyResult<Self> {
        Ok(PyLibrary { inner: FunctionLibrary::builtin(scenario(scenario_name)?) })
    }

    #[getter]
    fn scenario(&self) -> String {
        self.inner.scenario().to_string()
    }

    fn names(&self) -> Vec<String> {
        self.inner.names().map(str::to_owned).collect()
    }

    fn source(&self, name: &str) -> PyResult<String> {
        self.inner.get(name).map(|f| f.source.text.clone()).ok_or_else(|| err(format!("no function '{name}'")))
    }

    fn version(&self, name: &str) -> PyResult<u32> {
        self.inner.get(name).map(|f| f.version).ok_or_else(|| err(format!("no function '{name}'")))
    }

    fn history_len(&self) -> usize {
        self.inner.history().len()
    }

    /// Runs generated cases through perception and rule repair, evolving
    /// this library. Returns the run summary as a JSON string.
    #[pyo3(signature = (count=None, seed=2024, tau=0.5))]
    fn run(&mut self, count: Option<usize>, seed: u64, tau: f64) -> PyResult<String> {
        let cfg = RunConfig { scenario: self.inner.scenario(), count, seed, tau, ..RunConfig::default() };
        let cases = load_cases(&cfg).map_err(err)?;
        let (_, summary) = run_suite(&cases, &cfg, &Backends::deterministic(), &mut self.inner).map_err(err)?;
        serde_json::to_string(&summary).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Library({}, {} functions)", self.inner.scenario(), self.inner.len())
    }
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    WordPunct.tokenize(text)
}

/// `(k, len)` of the edited span, 1-based `k`.
#[pyfunction]
fn diff_span(original: Vec<String>, revised: Vec<String>) -> PyResult<(usize, usize)> {
    let s = sfl::diff_span(&original, &revised).map_err(err)?;
    Ok((s.k, s.len))
}

/// The revised text with edit markers around its changed span.
#[pyfunction]
fn mark_edit(original: &str, revised: &str) -> PyResult<String> {
    let f = WordPunct.tokenize(original);
    let fstar = WordPunct.seq(revised);
    let span = sfl::diff_span(&f, &fstar.tokens).map_err(err)?;
    let y = sfl::insert_markers(&fstar, span).map_err(err)?;
    Ok(WordPunct.detokenize(&y.y.tokens))
}

#[pyfunction]
fn strip_markers(text: &str) -> String {
    sfl::strip_marker_text(text)
}

#[pyfunction]
#[pyo3(signature = (target, lambda_edit=sfl::DEFAULT_LAMBDA, padded_len=None))]
fn weight_vector(target: &str, lambda_edit: f64, padded_len: Option<usize>) -> PyResult<Vec<f64>> {
    let y = SupervisionTarget::from_marked(WordPunct.seq(target)).map_err(err)?;
    let n = padded_len.unwrap_or(y.y.len());
    sfl::weight_vector(&y, lambda_edit, n).map_err(err)
}

#[pyfunction]
fn weighted_nll(logprobs: Vec<f64>, weights: Vec<f64>) -> PyResult<f64> {
    sfl::weighted_nll(&logprobs, &weights).map_err(err)
}

/// Per-dimension (or pooled, with `scalar`) mean and variance of `rows`.
#[pyfunction]
#[pyo3(signature = (rows, scalar=false))]
fn embedding_stats(rows: Vec<Vec<f64>>, scalar: bool) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let mode = if scalar { StatsMode::Scalar } else { StatsMode::PerDimension };
    let s = EmbeddingStats::from_matrix(&rows, 0.0, mode).map_err(err)?;
    Ok((s.mu, s.var))
}

#[pyfunction]
#[pyo3(signature = (mu, var, gamma=sfl::DEFAULT_GAMMA, seed=0))]
fn embedding_init(mu: Vec<f64>, var: Vec<f64>, gamma: f64, seed: u64) -> PyResult<Vec<f64>> {
    let stats = EmbeddingStats { dim: mu.len(), mu, var, gamma };
    sfl::embedding_init(&stats, seed).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (scores, labels, full=false))]
fn localization_loss(scores: BTreeMap<String, f64>, labels: BTreeMap<String, u8>, full: bool) -> PyResult<f64> {
    let form = if full { LossForm::FullBinary } else { LossForm::PositiveOnly };
    loc_loss(&scores, &labels, form).map_err(err)
}

/// Shipped distillation records for a scenario, one JSON string each.
#[pyfunction]
#[pyo3(signature = (scenario_name, lambda_edit=sfl::DEFAULT_LAMBDA))]
fn distill_dataset(scenario_name: &str, lambda_edit: f64) -> PyResult<Vec<String>> {
    let recs = sfl::distill_dataset(scenario(scenario_name)?, &WordPunct, lambda_edit).map_err(err)?;
    recs.iter().map(|r| serde_json::to_string(r).map_err(err)).collect()
}

#[pymodule]
fn mafig(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLibrary>()?;
    m.add("EDIT_START", sfl::EDIT_START)?;
    m.add("EDIT_END", sfl::EDIT_END)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(diff_span, m)?)?;
    m.add_function(wrap_pyfunction!(mark_edit, m)?)?;
    m.add_function(wrap_pyfunction!(strip_markers, m)?)?;
    m.add_function(wrap_pyfunction!(weight_vector, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_nll, m)?)?;
    m.add_function(wrap_pyfunction!(embedding_stats, m)?)?;
    m.add_function(wrap_pyfunction!(embedding_init, m)?)?;
    m.add_function(wrap_pyfunction!(localization_loss, m)?)?;
    m.add_function(wrap_pyfunction!(distill_dataset, m)?)?;
    Ok(())
}

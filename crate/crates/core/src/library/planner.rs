use std::sync::Arc;

use crate::afdsl::{self, CapabilityTable, EvalError, EvalErrorKind, Value};
use crate::simworld::{host_capabilities, SystemState};

use super::{FunctionLibrary, ENTRY_POINT};

/// Step budget for one evaluation of the entry point. Larger than the
/// per-call default because a plan evaluates most of the library.
pub const PLAN_STEP_BUDGET: u64 = 2_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRun {
    pub result: Result<Value, EvalError>,
    pub steps: u64,
}

/// Evaluates the library's entry point against `state`.
pub fn run_plan(lib: &FunctionLibrary, state: &SystemState) -> PlanRun {
    run_plan_with(lib, state, PLAN_STEP_BUDGET)
}

pub fn run_plan_with(lib: &FunctionLibrary, state: &SystemState, budget: u64) -> PlanRun {
    if state.scenario != lib.scenario() {
        return PlanRun {
            result: Err(EvalError::new(
                EvalErrorKind::Capability,
                format!("{} library cannot plan a {} state", lib.scenario(), state.scenario),
            )),
            steps: 0,
        };
    }
    let caps = capabilities(lib, state);
    let entry = lib.get(ENTRY_POINT).expect("library has an entry point");
    let (result, steps) = afdsl::evaluate_metered(&entry.ast, Vec::new(), &caps, budget);
    PlanRun { result, steps }
}

/// Host readers for `state` plus every library function.
pub fn capabilities(lib: &FunctionLibrary, state: &SystemState) -> CapabilityTable {
    let mut caps = host_capabilities(Arc::new(state.clone()));
    for f in lib.functions() {
        caps.function(f.ast.clone());
    }
    caps
}

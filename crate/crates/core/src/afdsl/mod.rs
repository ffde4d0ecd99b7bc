//! The atomic function language: a small, terminating, statically scoped
//! language in which every scheduling function of a library is written.
//!
//! The grammar (see `docs/afdsl.md`) has `let`, assignment, `if`/`else`,
//! bounded `for`-each and `return` statements; expressions cover literals,
//! variables, field access, arithmetic, comparisons, boolean operators,
//! builtin helpers and capability calls. There is no recursion and no
//! unbounded loop, and the interpreter charges every statement against a
//! step budget, so evaluation always terminates.
//!
//! Canonical text produced by [`pretty_print`] is the form that gets diffed,
//! tokenized and stored; `parse(pretty_print(ast)) == ast` for every tree the
//! parser produces.

mod ast;
mod builtins;
mod caps;
mod interp;
mod lexer;
mod parser;
mod pretty;
mod value;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ast::{BinaryOp, Expr, FunctionAst, Param, Stmt, TypeExpr, UnaryOp};
pub use builtins::{is_builtin, BUILTINS};
pub use caps::{Capability, CapabilityTable, HostFn, Namespace, RESERVED};
pub use value::Value;

/// Default statement budget for a single evaluation.
pub const DEFAULT_STEP_BUDGET: u64 = 100_000;

/// Where a piece of source text came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Library,
    Generated,
    Edited,
}

/// Source text of one atomic function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceText {
    pub text: String,
    pub origin: Origin,
}

impl SourceText {
    pub fn new(text: impl Into<String>, origin: Origin) -> Self {
        SourceText { text: text.into(), origin }
    }
}

impl fmt::Display for SourceText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    Unresolved,
    Banned,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl ParseError {
    pub(crate) fn syntax(line: usize, col: usize, message: impl Into<String>) -> Self {
        ParseError { kind: ParseErrorKind::Syntax, line, col, message: message.into() }
    }

    pub(crate) fn unresolved(line: usize, col: usize, message: impl Into<String>) -> Self {
        ParseError { kind: ParseErrorKind::Unresolved, line, col, message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalErrorKind {
    Type,
    Arithmetic,
    Index,
    Arity,
    BudgetExhausted,
    DepthExceeded,
    Capability,
    MissingReturn,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{kind:?}: {message}")]
pub struct EvalError {
    pub kind: EvalErrorKind,
    pub message: String,
}

impl EvalError {
    pub fn new(kind: EvalErrorKind, message: impl Into<String>) -> Self {
        EvalError { kind, message: message.into() }
    }
}

/// Parses one function. Calls must name a builtin or a member of `ns`;
/// variables must resolve to a parameter or an enclosing `let`.
pub fn parse(src: &str, ns: &Namespace) -> Result<FunctionAst, ParseError> {
    parser::parse_function(src, Some(ns))
}

/// Parses without resolving calls. Used to discover the names a set of
/// sources declares before resolving them against each other.
pub fn parse_unresolved(src: &str) -> Result<FunctionAst, ParseError> {
    parser::parse_function(src, None)
}

pub fn pretty_print(ast: &FunctionAst) -> String {
    pretty::render(ast)
}

/// Canonical source text of a tree, tagged with its origin.
pub fn canonical(ast: &FunctionAst, origin: Origin) -> SourceText {
    SourceText::new(pretty::render(ast), origin)
}

/// Renders a single expression in canonical form.
pub fn render_expr(e: &Expr) -> String {
    pretty::expr(e, false)
}

/// Evaluates `ast` on `args`. At most `step_budget` steps are spent.
pub fn evaluate(
    ast: &FunctionAst,
    args: Vec<Value>,
    caps: &CapabilityTable,
    step_budget: u64,
) -> Result<Value, EvalError> {
    evaluate_metered(ast, args, caps, step_budget).0
}

/// Like [`evaluate`], also reporting the number of steps consumed.
pub fn evaluate_metered(
    ast: &FunctionAst,
    args: Vec<Value>,
    caps: &CapabilityTable,
    step_budget: u64,
) -> (Result<Value, EvalError>, u64) {
    let mut m = interp::Machine::new(caps, step_budget);
    let r = m.call_function(ast, args);
    (r, m.used())
}

/// Literal expression denoting `v`. Negative numbers become a negation of a
/// positive literal, matching what the parser builds.
pub fn literal(v: &Value) -> Expr {
    match v {
        Value::Int(n) if *n < 0 => match n.checked_neg() {
            Some(p) => Expr::Unary(UnaryOp::Neg, Box::new(Expr::Int(p))),
            None => Expr::Binary(
                BinaryOp::Sub,
                Box::new(Expr::Unary(UnaryOp::Neg, Box::new(Expr::Int(i64::MAX)))),
                Box::new(Expr::Int(1)),
            ),
        },
        Value::Int(n) => Expr::Int(*n),
        Value::Real(x) if x.is_sign_negative() && *x != 0.0 => Expr::Unary(UnaryOp::Neg, Box::new(Expr::Real(-x))),
        Value::Real(x) => Expr::Real(x.abs()),
        Value::Bool(b) => Expr::Bool(*b),
        Value::Text(s) => Expr::Text(s.clone()),
        Value::Ident(s) => Expr::Ident(s.clone()),
        Value::Coord(x, y) => Expr::Coord(Box::new(literal(&Value::Int(*x))), Box::new(literal(&Value::Int(*y)))),
        Value::List(items) => Expr::List(items.iter().map(literal).collect()),
        Value::Record(fields) => Expr::Record(fields.iter().map(|(k, v)| (k.clone(), literal(v))).collect()),
    }
}

#[cfg(test)]
mod tests;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use super::ast::FunctionAst;
use super::builtins::is_builtin;
use super::value::Value;

/// Host-side evaluation rule. Must be deterministic in its arguments.
pub type HostFn = Arc<dyn Fn(&[Value]) -> Result<Value, String> + Send + Sync>;

#[derive(Clone)]
pub enum Capability {
    /// Implemented by the host (state reads, pure helpers).
    Host(HostFn),
    /// Another atomic function, evaluated with the same table and budget.
    Function(Arc<FunctionAst>),
}

impl fmt::Debug for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Capability::Host(_) => write!(f, "Host(..)"),
            Capability::Function(ast) => write!(f, "Function({})", ast.name),
        }
    }
}

/// Names callable from an atomic function besides the builtins.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Namespace {
    names: BTreeSet<String>,
}

impl Namespace {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Namespace { names: names.into_iter().map(Into::into).collect() }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.contains(name)
    }

    pub fn insert(&mut self, name: impl Into<String>) {
        self.names.insert(name.into());
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }
}

/// Mapping from capability name to its evaluation rule.
#[derive(Debug, Clone, Default)]
pub struct CapabilityTable {
    entries: BTreeMap<String, Capability>,
}

/// Words that can never name a capability.
pub const RESERVED: &[&str] = &[
    "fn", "let", "if", "else", "for", "in", "return", "true", "false", "and", "or", "not", "while", "loop", "break",
    "continue",
];

impl CapabilityTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a host rule. Panics on a reserved or builtin name, which is
    /// a programming error in the scenario wiring.
    pub fn host<F>(&mut self, name: &str, rule: F) -> &mut Self
    where
        F: Fn(&[Value]) -> Result<Value, String> + Send + Sync + 'static,
    {
        assert!(!RESERVED.contains(&name) && !is_builtin(name), "capability name '{name}' collides with the language");
        self.entries.insert(name.to_owned(), Capability::Host(Arc::new(rule)));
        self
    }

    pub fn function(&mut self, ast: Arc<FunctionAst>) -> &mut Self {
        self.entries.insert(ast.name.clone(), Capability::Function(ast));
        self
    }

    pub fn get(&self, name: &str) -> Option<&Capability> {
        self.entries.get(name)
    }

    pub fn namespace(&self) -> Namespace {
        Namespace::new(self.entries.keys().cloned())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

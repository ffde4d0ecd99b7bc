use std::fmt;

use super::value::Value;

/// Declared semantic type of a parameter or a return value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeExpr {
    Int,
    Real,
    Bool,
    Text,
    Coord,
    Ident,
    Record,
    List(Box<TypeExpr>),
}

impl TypeExpr {
    /// Whether `v` inhabits this type. Integers inhabit `real`.
    pub fn admits(&self, v: &Value) -> bool {
        match (self, v) {
            (TypeExpr::Int, Value::Int(_)) => true,
            (TypeExpr::Real, Value::Real(_) | Value::Int(_)) => true,
            (TypeExpr::Bool, Value::Bool(_)) => true,
            (TypeExpr::Text, Value::Text(_)) => true,
            (TypeExpr::Coord, Value::Coord(..)) => true,
            (TypeExpr::Ident, Value::Ident(_)) => true,
            (TypeExpr::Record, Value::Record(_)) => true,
            (TypeExpr::List(inner), Value::List(items)) => items.iter().all(|x| inner.admits(x)),
            _ => false,
        }
    }

    /// Coerce an admitted value to its canonical representation for this type.
    pub fn coerce(&self, v: Value) -> Value {
        match (self, v) {
            (TypeExpr::Real, Value::Int(n)) => Value::Real(n as f64),
            (TypeExpr::List(inner), Value::List(items)) => {
                Value::List(items.into_iter().map(|x| inner.coerce(x)).collect())
            }
            (_, v) => v,
        }
    }
}

impl fmt::Display for TypeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeExpr::Int => write!(f, "int"),
            TypeExpr::Real => write!(f, "real"),
            TypeExpr::Bool => write!(f, "bool"),
            TypeExpr::Text => write!(f, "text"),
            TypeExpr::Coord => write!(f, "coord"),
            TypeExpr::Ident => write!(f, "id"),
            TypeExpr::Record => write!(f, "record"),
            TypeExpr::List(inner) => write!(f, "list[{inner}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: TypeExpr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Rem => "%",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::And => "and",
            BinaryOp::Or => "or",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => 4,
            BinaryOp::Add | BinaryOp::Sub => 5,
            BinaryOp::Mul | BinaryOp::Div | BinaryOp::Rem => 6,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 4
    }
}

/// Precedence of `not`, between `and` and the comparisons.
pub const NOT_PRECEDENCE: u8 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(i64),
    Real(f64),
    Bool(bool),
    Text(String),
    /// `@name` identifier literal.
    Ident(String),
    Var(String),
    Coord(Box<Expr>, Box<Expr>),
    List(Vec<Expr>),
    Record(Vec<(String, Expr)>),
    Field(Box<Expr>, String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Let { name: String, value: Expr },
    Assign { name: String, value: Expr },
    If { cond: Expr, then: Vec<Stmt>, otherwise: Option<Vec<Stmt>> },
    For { var: String, iter: Expr, body: Vec<Stmt> },
    Return(Expr),
}

/// A parsed atomic function.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionAst {
    pub name: String,
    /// Documentation block (`///` lines), one entry per line.
    pub doc: Vec<String>,
    pub params: Vec<Param>,
    pub ret: TypeExpr,
    pub body: Vec<Stmt>,
}

impl FunctionAst {
    /// Names of every function or capability called anywhere in the body.
    pub fn callees(&self) -> Vec<String> {
        let mut out = Vec::new();
        walk_stmts(&self.body, &mut |e| {
            if let Expr::Call(name, _) = e {
                if !out.contains(name) {
                    out.push(name.clone());
                }
            }
        });
        out
    }

    /// Top-level `let` bound to `name`, if any.
    pub fn top_level_let(&self, name: &str) -> Option<&Expr> {
        self.body.iter().find_map(|s| match s {
            Stmt::Let { name: n, value } if n == name => Some(value),
            _ => None,
        })
    }

    pub fn top_level_let_mut(&mut self, name: &str) -> Option<&mut Expr> {
        self.body.iter_mut().find_map(|s| match s {
            Stmt::Let { name: n, value } if n == name => Some(value),
            _ => None,
        })
    }
}

fn walk_stmts(stmts: &[Stmt], f: &mut impl FnMut(&Expr)) {
    for s in stmts {
        match s {
            Stmt::Let { value, .. } | Stmt::Assign { value, .. } | Stmt::Return(value) => walk_expr(value, f),
            Stmt::If { cond, then, otherwise } => {
                walk_expr(cond, f);
                walk_stmts(then, f);
                if let Some(o) = otherwise {
                    walk_stmts(o, f);
                }
            }
            Stmt::For { iter, body, .. } => {
                walk_expr(iter, f);
                walk_stmts(body, f);
            }
        }
    }
}

fn walk_expr(e: &Expr, f: &mut impl FnMut(&Expr)) {
    f(e);
    match e {
        Expr::Coord(a, b) | Expr::Binary(_, a, b) => {
            walk_expr(a, f);
            walk_expr(b, f);
        }
        Expr::List(items) | Expr::Call(_, items) => items.iter().for_each(|x| walk_expr(x, f)),
        Expr::Record(fields) => fields.iter().for_each(|(_, x)| walk_expr(x, f)),
        Expr::Field(inner, _) | Expr::Unary(_, inner) => walk_expr(inner, f),
        _ => {}
    }
}

use super::ast::{BinaryOp, Expr, FunctionAst, Stmt, UnaryOp};
use super::builtins::{self, is_builtin};
use super::caps::{Capability, CapabilityTable};
use super::value::Value;
use super::{EvalError, EvalErrorKind};

/// Nested atomic-function calls allowed before evaluation is aborted.
const MAX_CALL_DEPTH: usize = 32;

pub(crate) struct Machine<'t> {
    caps: &'t CapabilityTable,
    budget: u64,
    used: u64,
    depth: usize,
}

enum Flow {
    Next,
    Return(Value),
}

struct Env {
    scopes: Vec<Vec<(String, Value)>>,
}

impl Env {
    fn lookup(&self, name: &str) -> Option<&Value> {
        self.scopes.iter().rev().find_map(|s| s.iter().rev().find(|(n, _)| n == name).map(|(_, v)| v))
    }

    fn assign(&mut self, name: &str, v: Value) -> bool {
        for scope in self.scopes.iter_mut().rev() {
            if let Some(slot) = scope.iter_mut().rev().find(|(n, _)| n == name) {
                slot.1 = v;
                return true;
            }
        }
        false
    }

    fn bind(&mut self, name: &str, v: Value) {
        self.scopes.last_mut().expect("scope").push((name.to_owned(), v));
    }
}

impl<'t> Machine<'t> {
    pub fn new(caps: &'t CapabilityTable, budget: u64) -> Self {
        Machine { caps, budget, used: 0, depth: 0 }
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    fn charge(&mut self, n: u64) -> Result<(), EvalError> {
        self.used = self.used.saturating_add(n);
        if self.used > self.budget {
            Err(EvalError::new(EvalErrorKind::BudgetExhausted, format!("step budget of {} exhausted", self.budget)))
        } else {
            Ok(())
        }
    }

    pub fn call_function(&mut self, f: &FunctionAst, args: Vec<Value>) -> Result<Value, EvalError> {
        if args.len() != f.params.len() {
            return Err(EvalError::new(
                EvalErrorKind::Arity,
                format!("{} expects {} argument(s), got {}", f.name, f.params.len(), args.len()),
            ));
        }
        if self.depth >= MAX_CALL_DEPTH {
            return Err(EvalError::new(
                EvalErrorKind::DepthExceeded,
                format!("call depth limit reached in {}", f.name),
            ));
        }
        self.charge(1)?;
        let mut frame = Vec::with_capacity(args.len());
        for (p, a) in f.params.iter().zip(args) {
            if !p.ty.admits(&a) {
                return Err(EvalError::new(
                    EvalErrorKind::Type,
                    format!("{}: parameter '{}' expects {}, got {}", f.name, p.name, p.ty, a.type_name()),
                ));
            }
            frame.push((p.name.clone(), p.ty.coerce(a)));
        }
        let mut env = Env { scopes: vec![frame] };
        self.depth += 1;
        let flow = self.block(&f.body, &mut env);
        self.depth -= 1;
        match flow? {
            Flow::Return(v) => {
                if f.ret.admits(&v) {
                    Ok(f.ret.coerce(v))
                } else {
                    Err(EvalError::new(
                        EvalErrorKind::Type,
                        format!("{} must return {}, got {}", f.name, f.ret, describe(&v)),
                    ))
                }
            }
            Flow::Next => Err(EvalError::new(
                EvalErrorKind::MissingReturn,
                format!("{} finished without returning a value", f.name),
            )),
        }
    }

    fn block(&mut self, stmts: &[Stmt], env: &mut Env) -> Result<Flow, EvalError> {
        env.scopes.push(Vec::new());
        let mut out = Ok(Flow::Next);
        for s in stmts {
            match self.stmt(s, env) {
                Ok(Flow::Next) => continue,
                other => {
                    out = other;
                    break;
                }
            }
        }
        env.scopes.pop();
        out
    }

    fn stmt(&mut self, s: &Stmt, env: &mut Env) -> Result<Flow, EvalError> {
        self.charge(1)?;
        match s {
            Stmt::Let { name, value } => {
                let v = self.expr(value, env)?;
                env.bind(name, v);
                Ok(Flow::Next)
            }
            Stmt::Assign { name, value } => {
                let v = self.expr(value, env)?;
                if env.assign(name, v) {
                    Ok(Flow::Next)
                } else {
                    Err(EvalError::new(
                        EvalErrorKind::Unresolved,
                        format!("assignment to undeclared variable '{name}'"),
                    ))
                }
            }
            Stmt::Return(e) => Ok(Flow::Return(self.expr(e, env)?)),
            Stmt::If { cond, then, otherwise } => {
                let c = self.expr(cond, env)?;
                let Value::Bool(c) = c else {
                    return Err(EvalError::new(
                        EvalErrorKind::Type,
                        format!("if condition must be bool, got {}", c.type_name()),
                    ));
                };
                if c {
                    self.block(then, env)
                } else if let Some(o) = otherwise {
                    self.block(o, env)
                } else {
                    Ok(Flow::Next)
                }
            }
            Stmt::For { var, iter, body } => {
                let items = match self.expr(iter, env)? {
                    Value::List(items) => items,
                    other => {
                        return Err(EvalError::new(
                            EvalErrorKind::Type,
                            format!("for-each needs a list, got {}", other.type_name()),
                        ))
                    }
                };
                for item in items {
                    self.charge(1)?;
                    env.scopes.push(vec![(var.clone(), item)]);
                    let flow = self.block(body, env);
                    env.scopes.pop();
                    if let Flow::Return(v) = flow? {
                        return Ok(Flow::Return(v));
                    }
                }
                Ok(Flow::Next)
            }
        }
    }

    fn expr(&mut self, e: &Expr, env: &mut Env) -> Result<Value, EvalError> {
        Ok(match e {
            Expr::Int(n) => Value::Int(*n),
            Expr::Real(x) => Value::Real(*x),
            Expr::Bool(b) => Value::Bool(*b),
            Expr::Text(s) => Value::Text(s.clone()),
            Expr::Ident(a) => Value::Ident(a.clone()),
            Expr::Var(name) => env
                .lookup(name)
                .cloned()
                .ok_or_else(|| EvalError::new(EvalErrorKind::Unresolved, format!("unresolved variable '{name}'")))?,
            Expr::Coord(a, b) => {
                let (x, y) = (self.expr(a, env)?, self.expr(b, env)?);
                match (x, y) {
                    (Value::Int(x), Value::Int(y)) => Value::Coord(x, y),
                    (x, y) => {
                        return Err(EvalError::new(
                            EvalErrorKind::Type,
                            format!("coordinate components must be int, got ({}, {})", x.type_name(), y.type_name()),
                        ))
                    }
                }
            }
            Expr::List(items) => {
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    out.push(self.expr(item, env)?);
                }
                Value::List(out)
            }
            Expr::Record(fields) => {
                let mut out = std::collections::BTreeMap::new();
                for (k, v) in fields {
                    out.insert(k.clone(), self.expr(v, env)?);
                }
                Value::Record(out)
            }
            Expr::Field(base, name) => {
                let b = self.expr(base, env)?;
                field(&b, name)?
            }
            Expr::Unary(op, inner) => {
                let v = self.expr(inner, env)?;
                unary(*op, v)?
            }
            Expr::Binary(BinaryOp::And, a, b) => {
                if truth(self.expr(a, env)?, "and")? {
                    Value::Bool(truth(self.expr(b, env)?, "and")?)
                } else {
                    Value::Bool(false)
                }
            }
            Expr::Binary(BinaryOp::Or, a, b) => {
                if truth(self.expr(a, env)?, "or")? {
                    Value::Bool(true)
                } else {
                    Value::Bool(truth(self.expr(b, env)?, "or")?)
                }
            }
            Expr::Binary(op, a, b) => {
                let (x, y) = (self.expr(a, env)?, self.expr(b, env)?);
                binary(*op, x, y)?
            }
            Expr::Call(name, args) => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.expr(a, env)?);
                }
                self.invoke(name, vals)?
            }
        })
    }

    fn invoke(&mut self, name: &str, args: Vec<Value>) -> Result<Value, EvalError> {
        if is_builtin(name) {
            self.charge(1)?;
            let out = builtins::call(name, args)?;
            self.charge(out.cost)?;
            return Ok(out.value);
        }
        match self.caps.get(name) {
            Some(Capability::Host(rule)) => {
                self.charge(1)?;
                rule(&args).map_err(|msg| EvalError::new(EvalErrorKind::Capability, format!("{name}: {msg}")))
            }
            Some(Capability::Function(ast)) => {
                let ast = ast.clone();
                self.call_function(&ast, args)
            }
            None => Err(EvalError::new(EvalErrorKind::Unresolved, format!("no capability named '{name}'"))),
        }
    }
}

fn describe(v: &Value) -> String {
    match v {
        Value::List(items) if !items.is_empty() => format!("list of {}", items[0].type_name()),
        other => other.type_name().to_owned(),
    }
}

fn truth(v: Value, op: &str) -> Result<bool, EvalError> {
    v.as_bool().ok_or_else(|| {
        EvalError::new(EvalErrorKind::Type, format!("'{op}' needs bool operands, got {}", v.type_name()))
    })
}

fn field(b: &Value, name: &str) -> Result<Value, EvalError> {
    match (b, name) {
        (Value::Coord(x, _), "x") => Ok(Value::Int(*x)),
        (Value::Coord(_, y), "y") => Ok(Value::Int(*y)),
        (Value::Record(fields), _) => fields
            .get(name)
            .cloned()
            .ok_or_else(|| EvalError::new(EvalErrorKind::Type, format!("record has no field '{name}'"))),
        _ => Err(EvalError::new(EvalErrorKind::Type, format!("{} has no field '{name}'", b.type_name()))),
    }
}

fn unary(op: UnaryOp, v: Value) -> Result<Value, EvalError> {
    match (op, v) {
        (UnaryOp::Neg, Value::Int(n)) => {
            n.checked_neg().map(Value::Int).ok_or_else(|| EvalError::new(EvalErrorKind::Arithmetic, "integer overflow"))
        }
        (UnaryOp::Neg, Value::Real(x)) => Ok(Value::Real(-x)),
        (UnaryOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
        (op, v) => Err(EvalError::new(EvalErrorKind::Type, format!("cannot apply {op:?} to {}", v.type_name()))),
    }
}

fn overflow() -> EvalError {
    EvalError::new(EvalErrorKind::Arithmetic, "integer overflow")
}

fn binary(op: BinaryOp, x: Value, y: Value) -> Result<Value, EvalError> {
    use BinaryOp::*;
    match op {
        Eq => return Ok(Value::Bool(x.loose_eq(&y))),
        Ne => return Ok(Value::Bool(!x.loose_eq(&y))),
        Lt | Le | Gt | Ge => {
            let ord = x.try_cmp(&y).ok_or_else(|| {
                EvalError::new(EvalErrorKind::Type, format!("cannot compare {} with {}", x.type_name(), y.type_name()))
            })?;
            let r = match op {
                Lt => ord.is_lt(),
                Le => ord.is_le(),
                Gt => ord.is_gt(),
                _ => ord.is_ge(),
            };
            return Ok(Value::Bool(r));
        }
        _ => {}
    }
    match (x, y) {
        (Value::Int(a), Value::Int(b)) => {
            let r = match op {
                Add => a.checked_add(b).ok_or_else(overflow)?,
                Sub => a.checked_sub(b).ok_or_else(overflow)?,
                Mul => a.checked_mul(b).ok_or_else(overflow)?,
                Div | Rem => {
                    if b == 0 {
                        return Err(EvalError::new(EvalErrorKind::Arithmetic, "division by zero"));
                    }
                    if op == Div {
                        a.checked_div(b).ok_or_else(overflow)?
                    } else {
                        a.checked_rem(b).ok_or_else(overflow)?
                    }
                }
                _ => unreachable!(),
            };
            Ok(Value::Int(r))
        }
        (Value::Text(a), Value::Text(b)) if op == Add => Ok(Value::Text(a + &b)),
        (x, y) if is_number(&x) && is_number(&y) => {
            let (a, b) = (as_f64(&x), as_f64(&y));
            let r = match op {
                Add => a + b,
                Sub => a - b,
                Mul => a * b,
                Div => {
                    if b == 0.0 {
                        return Err(EvalError::new(EvalErrorKind::Arithmetic, "division by zero"));
                    }
                    a / b
                }
                Rem => return Err(EvalError::new(EvalErrorKind::Type, "'%' is defined for integers only")),
                _ => unreachable!(),
            };
            Ok(Value::Real(r))
        }
        (x, y) => Err(EvalError::new(
            EvalErrorKind::Type,
            format!("cannot apply '{}' to {} and {}", op.symbol(), x.type_name(), y.type_name()),
        )),
    }
}

fn is_number(v: &Value) -> bool {
    matches!(v, Value::Int(_) | Value::Real(_))
}

fn as_f64(v: &Value) -> f64 {
    match v {
        Value::Int(n) => *n as f64,
        Value::Real(x) => *x,
        _ => f64::NAN,
    }
}

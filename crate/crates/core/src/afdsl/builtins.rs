//! Pure helper functions available to every atomic function.

use std::cmp::Ordering;

use super::value::Value;
use super::{EvalError, EvalErrorKind};

pub const BUILTINS: &[&str] = &[
    "len",
    "append",
    "concat",
    "contains",
    "range",
    "abs",
    "min",
    "max",
    "manhattan",
    "in_rect",
    "rect_cells",
    "at",
    "drop",
    "set",
    "order_by",
    "to_real",
];

pub fn is_builtin(name: &str) -> bool {
    BUILTINS.contains(&name)
}

/// Result of a builtin plus the extra steps it consumed (proportional to
/// the size of any list it materialised).
pub(crate) struct Outcome {
    pub value: Value,
    pub cost: u64,
}

fn ty(msg: impl Into<String>) -> EvalError {
    EvalError::new(EvalErrorKind::Type, msg)
}

fn arity(name: &str, want: usize, got: usize) -> Result<(), EvalError> {
    if want == got {
        Ok(())
    } else {
        Err(EvalError::new(EvalErrorKind::Arity, format!("{name} expects {want} argument(s), got {got}")))
    }
}

fn list<'v>(name: &str, v: &'v Value) -> Result<&'v [Value], EvalError> {
    v.as_list().ok_or_else(|| ty(format!("{name}: expected list, got {}", v.type_name())))
}

fn int(name: &str, v: &Value) -> Result<i64, EvalError> {
    v.as_int().ok_or_else(|| ty(format!("{name}: expected int, got {}", v.type_name())))
}

fn coord(name: &str, v: &Value) -> Result<(i64, i64), EvalError> {
    v.as_coord().ok_or_else(|| ty(format!("{name}: expected coord, got {}", v.type_name())))
}

fn cheap(value: Value) -> Result<Outcome, EvalError> {
    Ok(Outcome { value, cost: 0 })
}

fn sized(items: Vec<Value>) -> Result<Outcome, EvalError> {
    let cost = items.len() as u64;
    Ok(Outcome { value: Value::List(items), cost })
}

/// Maximum number of elements a single builtin may materialise.
const MAX_MATERIALISED: i64 = 1_000_000;

pub(crate) fn call(name: &str, args: Vec<Value>) -> Result<Outcome, EvalError> {
    match name {
        "len" => {
            arity(name, 1, args.len())?;
            match &args[0] {
                Value::List(items) => cheap(Value::Int(items.len() as i64)),
                Value::Text(s) => cheap(Value::Int(s.chars().count() as i64)),
                other => Err(ty(format!("len: expected list or text, got {}", other.type_name()))),
            }
        }
        "append" => {
            arity(name, 2, args.len())?;
            let mut it = args.into_iter();
            let (l, x) = (it.next().unwrap(), it.next().unwrap());
            let mut items = list(name, &l)?.to_vec();
            items.push(x);
            sized(items)
        }
        "concat" => {
            arity(name, 2, args.len())?;
            let mut items = list(name, &args[0])?.to_vec();
            items.extend_from_slice(list(name, &args[1])?);
            sized(items)
        }
        "contains" => {
            arity(name, 2, args.len())?;
            let items = list(name, &args[0])?;
            let found = items.iter().any(|x| x.loose_eq(&args[1]));
            Ok(Outcome { value: Value::Bool(found), cost: items.len() as u64 / 8 })
        }
        "range" => {
            arity(name, 2, args.len())?;
            let (lo, hi) = (int(name, &args[0])?, int(name, &args[1])?);
            if hi.saturating_sub(lo) > MAX_MATERIALISED {
                return Err(EvalError::new(EvalErrorKind::Capability, "range: too many elements"));
            }
            sized((lo..hi.max(lo)).map(Value::Int).collect())
        }
        "abs" => {
            arity(name, 1, args.len())?;
            match &args[0] {
                Value::Int(n) => n
                    .checked_abs()
                    .map(|v| Outcome { value: Value::Int(v), cost: 0 })
                    .ok_or_else(|| EvalError::new(EvalErrorKind::Arithmetic, "abs overflow")),
                Value::Real(x) => cheap(Value::Real(x.abs())),
                other => Err(ty(format!("abs: expected number, got {}", other.type_name()))),
            }
        }
        "min" | "max" => {
            arity(name, 2, args.len())?;
            let ord = args[0].try_cmp(&args[1]).ok_or_else(|| ty(format!("{name}: operands are not comparable")))?;
            let pick_first = match name {
                "min" => ord != Ordering::Greater,
                _ => ord != Ordering::Less,
            };
            let mut it = args.into_iter();
            let (a, b) = (it.next().unwrap(), it.next().unwrap());
            cheap(if pick_first { a } else { b })
        }
        "manhattan" => {
            arity(name, 2, args.len())?;
            let (a, b) = (coord(name, &args[0])?, coord(name, &args[1])?);
            let d = (a.0 - b.0)
                .checked_abs()
                .zip((a.1 - b.1).checked_abs())
                .and_then(|(dx, dy)| dx.checked_add(dy))
                .ok_or_else(|| EvalError::new(EvalErrorKind::Arithmetic, "manhattan overflow"))?;
            cheap(Value::Int(d))
        }
        "in_rect" => {
            arity(name, 3, args.len())?;
            let c = coord(name, &args[0])?;
            let lo = coord(name, &args[1])?;
            let hi = coord(name, &args[2])?;
            cheap(Value::Bool(lo.0 <= c.0 && c.0 <= hi.0 && lo.1 <= c.1 && c.1 <= hi.1))
        }
        "rect_cells" => {
            arity(name, 2, args.len())?;
            let lo = coord(name, &args[0])?;
            let hi = coord(name, &args[1])?;
            let w = hi.0.saturating_sub(lo.0).saturating_add(1).max(0);
            let h = hi.1.saturating_sub(lo.1).saturating_add(1).max(0);
            if w.saturating_mul(h) > MAX_MATERIALISED {
                return Err(EvalError::new(EvalErrorKind::Capability, "rect_cells: rectangle too large"));
            }
            let mut cells = Vec::new();
            for y in lo.1..=hi.1 {
                for x in lo.0..=hi.0 {
                    cells.push(Value::Coord(x, y));
                }
            }
            sized(cells)
        }
        "at" => {
            arity(name, 2, args.len())?;
            let items = list(name, &args[0])?;
            let i = int(name, &args[1])?;
            usize::try_from(i)
                .ok()
                .and_then(|i| items.get(i))
                .cloned()
                .map(|value| Outcome { value, cost: 0 })
                .ok_or_else(|| {
                    EvalError::new(
                        EvalErrorKind::Index,
                        format!("at: index {i} out of bounds for length {}", items.len()),
                    )
                })
        }
        "drop" => {
            arity(name, 2, args.len())?;
            let items = list(name, &args[0])?;
            let n = int(name, &args[1])?.max(0) as usize;
            sized(items.iter().skip(n).cloned().collect())
        }
        "set" => {
            arity(name, 3, args.len())?;
            let mut it = args.into_iter();
            let (rec, key, v) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
            let Value::Record(mut fields) = rec else {
                return Err(ty("set: expected record"));
            };
            let Value::Text(key) = key else {
                return Err(ty("set: field name must be text"));
            };
            fields.insert(key, v);
            cheap(Value::Record(fields))
        }
        "order_by" => {
            arity(name, 2, args.len())?;
            let items = list(name, &args[0])?;
            let keys = list(name, &args[1])?;
            if items.len() != keys.len() {
                return Err(ty("order_by: items and keys differ in length"));
            }
            let mut idx: Vec<usize> = (0..items.len()).collect();
            let mut bad = false;
            idx.sort_by(|&a, &b| {
                keys[a].try_cmp(&keys[b]).unwrap_or_else(|| {
                    bad = true;
                    Ordering::Equal
                })
            });
            if bad {
                return Err(ty("order_by: keys are not mutually comparable"));
            }
            let n = items.len() as u64;
            Ok(Outcome {
                value: Value::List(idx.into_iter().map(|i| items[i].clone()).collect()),
                cost: n + n.max(1).ilog2() as u64 * n,
            })
        }
        "to_real" => {
            arity(name, 1, args.len())?;
            match &args[0] {
                Value::Int(n) => cheap(Value::Real(*n as f64)),
                Value::Real(x) => cheap(Value::Real(*x)),
                other => Err(ty(format!("to_real: expected number, got {}", other.type_name()))),
            }
        }
        _ => Err(EvalError::new(EvalErrorKind::Unresolved, format!("unknown builtin '{name}'"))),
    }
}

use std::fmt::Write;

use super::ast::{Expr, FunctionAst, Stmt, UnaryOp, NOT_PRECEDENCE};

const INDENT: &str = "    ";
const NEG_PRECEDENCE: u8 = 7;
const ATOM_PRECEDENCE: u8 = 8;

/// Canonical text of a function: one statement per line, four-space
/// indentation, single spaces around binary operators, trailing newline.
pub fn render(f: &FunctionAst) -> String {
    let mut out = String::new();
    for line in &f.doc {
        if line.is_empty() {
            out.push_str("///\n");
        } else {
            let _ = writeln!(out, "/// {line}");
        }
    }
    let params: Vec<String> = f.params.iter().map(|p| format!("{}: {}", p.name, p.ty)).collect();
    let _ = writeln!(out, "fn {}({}) -> {} {{", f.name, params.join(", "), f.ret);
    block_body(&mut out, &f.body, 1);
    out.push_str("}\n");
    out
}

fn block_body(out: &mut String, stmts: &[Stmt], depth: usize) {
    for s in stmts {
        stmt(out, s, depth);
    }
}

fn pad(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str(INDENT);
    }
}

fn stmt(out: &mut String, s: &Stmt, depth: usize) {
    pad(out, depth);
    match s {
        Stmt::Let { name, value } => {
            let _ = writeln!(out, "let {name} = {}", expr(value, false));
        }
        Stmt::Assign { name, value } => {
            let _ = writeln!(out, "{name} = {}", expr(value, false));
        }
        Stmt::Return(value) => {
            let _ = writeln!(out, "return {}", expr(value, false));
        }
        Stmt::For { var, iter, body } => {
            let _ = writeln!(out, "for {var} in {} {{", expr(iter, true));
            block_body(out, body, depth + 1);
            pad(out, depth);
            out.push_str("}\n");
        }
        Stmt::If { .. } => {
            if_chain(out, s, depth);
            out.push('\n');
        }
    }
}

// Writes an if/else chain without the trailing newline.
fn if_chain(out: &mut String, s: &Stmt, depth: usize) {
    let Stmt::If { cond, then, otherwise } = s else {
        unreachable!("if_chain called on non-if");
    };
    let _ = writeln!(out, "if {} {{", expr(cond, true));
    block_body(out, then, depth + 1);
    pad(out, depth);
    out.push('}');
    match otherwise.as_deref() {
        None => {}
        Some([nested @ Stmt::If { .. }]) => {
            out.push_str(" else ");
            if_chain(out, nested, depth);
        }
        Some(body) => {
            out.push_str(" else {\n");
            block_body(out, body, depth + 1);
            pad(out, depth);
            out.push('}');
        }
    }
}

/// Renders an expression. `header` marks `if`/`for` headers, where a bare
/// record literal would be read as the start of the block.
pub fn expr(e: &Expr, header: bool) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0, header);
    s
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary(op, ..) => op.precedence(),
        Expr::Unary(UnaryOp::Not, _) => NOT_PRECEDENCE,
        Expr::Unary(UnaryOp::Neg, _) => NEG_PRECEDENCE,
        // A negative literal prints with a leading minus.
        Expr::Int(n) if *n < 0 => NEG_PRECEDENCE,
        Expr::Real(x) if x.is_sign_negative() => NEG_PRECEDENCE,
        _ => ATOM_PRECEDENCE,
    }
}

fn write_expr(out: &mut String, e: &Expr, min: u8, header: bool) {
    if precedence(e) < min {
        out.push('(');
        write_expr(out, e, 0, false);
        out.push(')');
        return;
    }
    match e {
        Expr::Int(n) => {
            let _ = write!(out, "{n}");
        }
        Expr::Real(x) => {
            let _ = write!(out, "{x:?}");
        }
        Expr::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        Expr::Text(s) => write_text(out, s),
        Expr::Ident(a) => {
            let _ = write!(out, "@{a}");
        }
        Expr::Var(v) => out.push_str(v),
        Expr::Coord(a, b) => {
            out.push('(');
            write_expr(out, a, 0, false);
            out.push_str(", ");
            write_expr(out, b, 0, false);
            out.push(')');
        }
        Expr::List(items) => {
            out.push('[');
            comma_list(out, items);
            out.push(']');
        }
        Expr::Record(fields) => {
            if header {
                out.push('(');
            }
            out.push('{');
            for (i, (k, v)) in fields.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "{k}: ");
                write_expr(out, v, 0, false);
            }
            out.push('}');
            if header {
                out.push(')');
            }
        }
        Expr::Field(base, name) => {
            write_expr(out, base, ATOM_PRECEDENCE, header);
            let _ = write!(out, ".{name}");
        }
        Expr::Call(name, args) => {
            out.push_str(name);
            out.push('(');
            comma_list(out, args);
            out.push(')');
        }
        Expr::Unary(UnaryOp::Not, inner) => {
            out.push_str("not ");
            write_expr(out, inner, NOT_PRECEDENCE, header);
        }
        Expr::Unary(UnaryOp::Neg, inner) => {
            out.push('-');
            // `--x` would still lex, but parenthesising nested negation reads better.
            let nested = matches!(**inner, Expr::Unary(UnaryOp::Neg, _)) || precedence(inner) == NEG_PRECEDENCE;
            if nested {
                out.push('(');
                write_expr(out, inner, 0, false);
                out.push(')');
            } else {
                write_expr(out, inner, ATOM_PRECEDENCE, header);
            }
        }
        Expr::Binary(op, lhs, rhs) => {
            let p = op.precedence();
            let lmin = if op.is_comparison() { p + 1 } else { p };
            write_expr(out, lhs, lmin, header);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(out, rhs, p + 1, header);
        }
    }
}

fn comma_list(out: &mut String, items: &[Expr]) {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(out, item, 0, false);
    }
}

fn write_text(out: &mut String, s: &str) {
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
}

use super::ast::{BinaryOp, Expr, FunctionAst, Param, Stmt, TypeExpr, UnaryOp};
use super::builtins::is_builtin;
use super::lexer::{lex, Tok, Token};
use super::{Namespace, ParseError, ParseErrorKind};

/// Maximum nesting of blocks and expressions accepted by the parser.
const MAX_DEPTH: usize = 64;

pub(crate) fn parse_function(src: &str, ns: Option<&Namespace>) -> Result<FunctionAst, ParseError> {
    let tokens = lex(src)?;
    let mut p = Parser { tokens, pos: 0, scopes: Vec::new(), ns, fn_name: String::new(), depth: 0 };
    let f = p.function()?;
    if p.peek() != &Tok::Eof {
        return Err(p.err_here("unexpected text after function body"));
    }
    Ok(f)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    scopes: Vec<Vec<String>>,
    ns: Option<&'a Namespace>,
    fn_name: String,
    depth: usize,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.tokens[self.pos];
        (t.line, t.col)
    }

    fn advance(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn err_here(&self, msg: impl Into<String>) -> ParseError {
        let (l, c) = self.here();
        match self.peek() {
            Tok::Banned(word) => ParseError {
                kind: ParseErrorKind::Banned,
                line: l,
                col: c,
                message: format!("'{word}' is not supported; only bounded for-each loops exist"),
            },
            _ => ParseError::syntax(l, c, msg),
        }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.advance();
            Ok(())
        } else {
            Err(self.err_here(format!("expected {what}")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.advance();
                Ok(name)
            }
            _ => Err(self.err_here(format!("expected {what}"))),
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.err_here("nesting too deep"));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn bound(&self, name: &str) -> bool {
        self.scopes.iter().rev().any(|s| s.iter().any(|n| n == name))
    }

    fn bind(&mut self, name: String) {
        self.scopes.last_mut().expect("scope").push(name);
    }

    fn function(&mut self) -> Result<FunctionAst, ParseError> {
        let mut doc = Vec::new();
        while let Tok::Doc(line) = self.peek().clone() {
            doc.push(line);
            self.advance();
        }
        self.expect(Tok::Fn, "'fn'")?;
        let name = self.ident("function name")?;
        self.fn_name = name.clone();
        self.expect(Tok::LParen, "'('")?;
        let mut params: Vec<Param> = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let (l, c) = self.here();
                let pname = self.ident("parameter name")?;
                if params.iter().any(|p| p.name == pname) {
                    return Err(ParseError::syntax(l, c, format!("duplicate parameter '{pname}'")));
                }
                self.expect(Tok::Colon, "':'")?;
                let ty = self.type_expr()?;
                params.push(Param { name: pname, ty });
                if *self.peek() == Tok::Comma {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "')'")?;
        self.expect(Tok::Arrow, "'->'")?;
        let ret = self.type_expr()?;
        self.scopes.push(params.iter().map(|p| p.name.clone()).collect());
        let body = self.block()?;
        self.scopes.pop();
        Ok(FunctionAst { name, doc, params, ret, body })
    }

    fn type_expr(&mut self) -> Result<TypeExpr, ParseError> {
        let (l, c) = self.here();
        let name = self.ident("type")?;
        Ok(match name.as_str() {
            "int" => TypeExpr::Int,
            "real" => TypeExpr::Real,
            "bool" => TypeExpr::Bool,
            "text" => TypeExpr::Text,
            "coord" => TypeExpr::Coord,
            "id" => TypeExpr::Ident,
            "record" => TypeExpr::Record,
            "list" => {
                self.expect(Tok::LBracket, "'[' after 'list'")?;
                let inner = self.type_expr()?;
                self.expect(Tok::RBracket, "']'")?;
                TypeExpr::List(Box::new(inner))
            }
            other => return Err(ParseError::syntax(l, c, format!("unknown type '{other}'"))),
        })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.enter()?;
        self.expect(Tok::LBrace, "'{'")?;
        self.scopes.push(Vec::new());
        let mut stmts = Vec::new();
        while *self.peek() != Tok::RBrace {
            if *self.peek() == Tok::Eof {
                return Err(self.err_here("unexpected end of input, expected '}'"));
            }
            stmts.push(self.stmt()?);
        }
        self.advance();
        self.scopes.pop();
        self.leave();
        Ok(stmts)
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        match self.peek().clone() {
            Tok::Let => {
                self.advance();
                let name = self.ident("variable name")?;
                self.expect(Tok::Assign, "'='")?;
                let value = self.expr(true)?;
                self.bind(name.clone());
                Ok(Stmt::Let { name, value })
            }
            Tok::If => self.if_stmt(),
            Tok::For => {
                self.advance();
                let var = self.ident("loop variable")?;
                self.expect(Tok::In, "'in'")?;
                let iter = self.expr(false)?;
                self.scopes.push(vec![var.clone()]);
                let body = self.block()?;
                self.scopes.pop();
                Ok(Stmt::For { var, iter, body })
            }
            Tok::Return => {
                self.advance();
                Ok(Stmt::Return(self.expr(true)?))
            }
            Tok::Ident(name) => {
                let (l, c) = self.here();
                self.advance();
                if *self.peek() != Tok::Assign {
                    return Err(self.err_here("expected '=' (expressions are not statements)"));
                }
                self.advance();
                if !self.bound(&name) {
                    return Err(ParseError::unresolved(l, c, format!("assignment to undeclared variable '{name}'")));
                }
                let value = self.expr(true)?;
                Ok(Stmt::Assign { name, value })
            }
            _ => Err(self.err_here("expected a statement")),
        }
    }

    fn if_stmt(&mut self) -> Result<Stmt, ParseError> {
        self.expect(Tok::If, "'if'")?;
        let cond = self.expr(false)?;
        let then = self.block()?;
        let otherwise = if *self.peek() == Tok::Else {
            self.advance();
            if *self.peek() == Tok::If {
                self.enter()?;
                let nested = self.if_stmt()?;
                self.leave();
                Some(vec![nested])
            } else {
                Some(self.block()?)
            }
        } else {
            None
        };
        Ok(Stmt::If { cond, then, otherwise })
    }

    // Expressions. `records` is false in `if`/`for` headers, where '{' opens the block.
    fn expr(&mut self, records: bool) -> Result<Expr, ParseError> {
        self.enter()?;
        let e = self.or_expr(records);
        self.leave();
        e
    }

    fn or_expr(&mut self, r: bool) -> Result<Expr, ParseError> {
        let mut lhs = self.and_expr(r)?;
        while *self.peek() == Tok::Or {
            self.advance();
            let rhs = self.and_expr(r)?;
            lhs = Expr::Binary(BinaryOp::Or, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self, r: bool) -> Result<Expr, ParseError> {
        let mut lhs = self.not_expr(r)?;
        while *self.peek() == Tok::And {
            self.advance();
            let rhs = self.not_expr(r)?;
            lhs = Expr::Binary(BinaryOp::And, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn not_expr(&mut self, r: bool) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Not {
            self.advance();
            self.enter()?;
            let inner = self.not_expr(r);
            self.leave();
            return Ok(Expr::Unary(UnaryOp::Not, Box::new(inner?)));
        }
        self.cmp_expr(r)
    }

    fn cmp_expr(&mut self, r: bool) -> Result<Expr, ParseError> {
        let lhs = self.add_expr(r)?;
        let op = match self.peek() {
            Tok::EqEq => BinaryOp::Eq,
            Tok::NotEq => BinaryOp::Ne,
            Tok::Lt => BinaryOp::Lt,
            Tok::Le => BinaryOp::Le,
            Tok::Gt => BinaryOp::Gt,
            Tok::Ge => BinaryOp::Ge,
            _ => return Ok(lhs),
        };
        self.advance();
        let rhs = self.add_expr(r)?;
        if matches!(self.peek(), Tok::EqEq | Tok::NotEq | Tok::Lt | Tok::Le | Tok::Gt | Tok::Ge) {
            return Err(self.err_here("comparisons do not chain; add parentheses"));
        }
        Ok(Expr::Binary(op, Box::new(lhs), Box::new(rhs)))
    }

    fn add_expr(&mut self, r: bool) -> Result<Expr, ParseError> {
        let mut lhs = self.mul_expr(r)?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.mul_expr(r)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn mul_expr(&mut self, r: bool) -> Result<Expr, ParseError> {
        let mut lhs = self.unary(r)?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                Tok::Percent => BinaryOp::Rem,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.unary(r)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self, r: bool) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.advance();
            self.enter()?;
            let inner = self.unary(r);
            self.leave();
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner?)));
        }
        self.postfix(r)
    }

    fn postfix(&mut self, r: bool) -> Result<Expr, ParseError> {
        let mut e = self.primary(r)?;
        while *self.peek() == Tok::Dot {
            self.advance();
            let field = self.ident("field name")?;
            e = Expr::Field(Box::new(e), field);
        }
        Ok(e)
    }

    fn primary(&mut self, r: bool) -> Result<Expr, ParseError> {
        let (l, c) = self.here();
        match self.peek().clone() {
            Tok::Int(n) => {
                self.advance();
                Ok(Expr::Int(n))
            }
            Tok::Real(x) => {
                self.advance();
                Ok(Expr::Real(x))
            }
            Tok::Str(s) => {
                self.advance();
                Ok(Expr::Text(s))
            }
            Tok::True => {
                self.advance();
                Ok(Expr::Bool(true))
            }
            Tok::False => {
                self.advance();
                Ok(Expr::Bool(false))
            }
            Tok::Atom(a) => {
                self.advance();
                Ok(Expr::Ident(a))
            }
            Tok::Ident(name) => {
                self.advance();
                if *self.peek() == Tok::LParen {
                    self.advance();
                    let args = self.list_items(Tok::RParen, "')'")?;
                    self.resolve_call(&name, l, c)?;
                    return Ok(Expr::Call(name, args));
                }
                if !self.bound(&name) {
                    return Err(ParseError::unresolved(l, c, format!("unresolved variable '{name}'")));
                }
                Ok(Expr::Var(name))
            }
            Tok::LParen => {
                self.advance();
                let first = self.expr(true)?;
                if *self.peek() == Tok::Comma {
                    self.advance();
                    let second = self.expr(true)?;
                    self.expect(Tok::RParen, "')' closing coordinate")?;
                    return Ok(Expr::Coord(Box::new(first), Box::new(second)));
                }
                self.expect(Tok::RParen, "')'")?;
                Ok(first)
            }
            Tok::LBracket => {
                self.advance();
                Ok(Expr::List(self.list_items(Tok::RBracket, "']'")?))
            }
            Tok::LBrace if r => {
                self.advance();
                let mut fields: Vec<(String, Expr)> = Vec::new();
                if *self.peek() != Tok::RBrace {
                    loop {
                        let (fl, fc) = self.here();
                        let key = self.ident("field name")?;
                        if fields.iter().any(|(k, _)| *k == key) {
                            return Err(ParseError::syntax(fl, fc, format!("duplicate field '{key}'")));
                        }
                        self.expect(Tok::Colon, "':'")?;
                        let v = self.expr(true)?;
                        fields.push((key, v));
                        if *self.peek() == Tok::Comma {
                            self.advance();
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::RBrace, "'}' closing record")?;
                Ok(Expr::Record(fields))
            }
            _ => Err(self.err_here("expected an expression")),
        }
    }

    fn list_items(&mut self, close: Tok, what: &str) -> Result<Vec<Expr>, ParseError> {
        let mut items = Vec::new();
        if *self.peek() != close {
            loop {
                items.push(self.expr(true)?);
                if *self.peek() == Tok::Comma {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect(close, what)?;
        Ok(items)
    }

    fn resolve_call(&self, name: &str, l: usize, c: usize) -> Result<(), ParseError> {
        if name == self.fn_name {
            return Err(ParseError {
                kind: ParseErrorKind::Banned,
                line: l,
                col: c,
                message: format!("recursive call to '{name}' is not allowed"),
            });
        }
        if is_builtin(name) {
            return Ok(());
        }
        match self.ns {
            None => Ok(()),
            Some(ns) if ns.contains(name) => Ok(()),
            Some(_) => Err(ParseError::unresolved(l, c, format!("call to undeclared capability '{name}'"))),
        }
    }
}

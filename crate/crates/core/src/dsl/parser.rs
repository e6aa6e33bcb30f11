//! Recursive-descent parser producing a [`Program`].
//!
//! Errors are collected per top-level declaration: after a syntax error the
//! parser skips to the next line at brace depth zero and carries on, so one
//! bad factor does not hide problems elsewhere.

use crate::diag::{DiagCode, Diagnostic, Span};
use crate::expr::{BinOp, Builtin, Color, Expr, ExprKind, Place, ShapeKind, Stmt, StmtKind, UnOp};
use crate::ir::FactorKind;
use crate::value::{Domain, Init, Value};

use super::lexer::{lex, Tok, Token};

/// Expression and block nesting limit; keeps recursion bounded on hostile input.
pub const MAX_DEPTH: usize = 64;

/// Words that cannot name variables, factors or let-bindings.
pub const KEYWORDS: &[&str] = &[
    "if", "then", "else", "let", "in", "and", "or", "not", "true", "false", "action", "var", "reads", "writes",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    pub decls: Vec<Decl>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Decl {
    Simulation { name: String, description: String, span: Span },
    Actions { names: Vec<(String, Span)>, span: Span },
    MaxSteps { value: u64, span: Span },
    Score { id: String, span: Span },
    Var(VarDecl),
    Factor(FactorDecl),
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarDecl {
    pub id: String,
    pub label: Option<String>,
    pub domain: Domain,
    pub init: Init,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorDecl {
    pub kind: FactorKind,
    pub id: String,
    pub order: Option<i64>,
    pub scope: Vec<(String, Span)>,
    pub targets: Vec<(String, Span)>,
    pub body: Vec<Stmt>,
    pub span: Span,
}

type PResult<T> = Result<T, Diagnostic>;

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    depth: usize,
}

/// Parses a whole program. Never panics; returns every syntax diagnostic
/// found (lexical ones included).
pub fn parse(src: &str) -> Result<Program, Vec<Diagnostic>> {
    let (toks, mut diags) = lex(src);
    let mut p = Parser { toks, pos: 0, depth: 0 };
    let mut decls = Vec::new();
    loop {
        p.skip_newlines();
        if p.at(&Tok::Eof) {
            break;
        }
        let start = p.pos;
        p.depth = 0;
        match p.decl() {
            Ok(d) => decls.push(d),
            Err(d) => {
                diags.push(d);
                p.recover(start);
            }
        }
    }
    if decls.is_empty() && diags.is_empty() {
        diags.push(Diagnostic::error(DiagCode::MissingDeclaration, Span::new(0, src.len()), "empty program: expected declarations"));
    }
    if diags.is_empty() {
        Ok(Program { decls })
    } else {
        Err(diags)
    }
}

/// Parses a bare statement list, as found between a factor's braces.
pub fn parse_body(src: &str) -> Result<Vec<Stmt>, Vec<Diagnostic>> {
    let (toks, mut diags) = lex(src);
    let mut p = Parser { toks, pos: 0, depth: 0 };
    match p.stmts_until(&Tok::Eof) {
        Ok(body) if diags.is_empty() => Ok(body),
        Ok(_) => Err(diags),
        Err(d) => {
            diags.push(d);
            Err(diags)
        }
    }
}

/// Parses a domain such as `int[0, 9]`.
pub fn parse_domain(src: &str) -> Result<Domain, Vec<Diagnostic>> {
    parse_fragment(src, |p| p.domain())
}

/// Parses an initial-value clause: `= 3`, `3`, `~ uniform`, `uniform`,
/// `categorical(...)`.
pub fn parse_init(src: &str) -> Result<Init, Vec<Diagnostic>> {
    parse_fragment(src, |p| match p.peek() {
        Tok::Assign | Tok::Tilde => p.init(),
        Tok::Ident(w) if w == "uniform" || w == "categorical" => p.init_distribution(),
        _ => Ok(Init::Point { value: p.literal()? }),
    })
}

fn parse_fragment<T>(src: &str, f: impl FnOnce(&mut Parser) -> PResult<T>) -> Result<T, Vec<Diagnostic>> {
    let (toks, mut diags) = lex(src);
    let mut p = Parser { toks, pos: 0, depth: 0 };
    match f(&mut p).and_then(|v| {
        p.skip_newlines();
        p.expect(&Tok::Eof, "end of input")?;
        Ok(v)
    }) {
        Ok(v) if diags.is_empty() => Ok(v),
        Ok(_) => Err(diags),
        Err(d) => {
            diags.push(d);
            Err(diags)
        }
    }
}

fn binop_of(t: &Tok) -> Option<BinOp> {
    Some(match t {
        Tok::Plus => BinOp::Add,
        Tok::Minus => BinOp::Sub,
        Tok::Star => BinOp::Mul,
        Tok::Slash => BinOp::Div,
        Tok::Percent => BinOp::Rem,
        Tok::EqEq => BinOp::Eq,
        Tok::NotEq => BinOp::Ne,
        Tok::Lt => BinOp::Lt,
        Tok::Le => BinOp::Le,
        Tok::Gt => BinOp::Gt,
        Tok::Ge => BinOp::Ge,
        Tok::Ident(w) if w == "and" => BinOp::And,
        Tok::Ident(w) if w == "or" => BinOp::Or,
        _ => return None,
    })
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].span
    }

    fn at(&self, t: &Tok) -> bool {
        self.peek() == t
    }

    fn at_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == w)
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.at(t) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn err_here(&self, expected: &str) -> Diagnostic {
        Diagnostic::error(DiagCode::Syntax, self.span(), format!("expected {expected}, found {}", self.peek().describe()))
    }

    fn expect(&mut self, t: &Tok, what: &str) -> PResult<Span> {
        if self.at(t) {
            Ok(self.bump().span)
        } else {
            Err(self.err_here(what))
        }
    }

    fn expect_word(&mut self, w: &str) -> PResult<Span> {
        if self.at_word(w) {
            Ok(self.bump().span)
        } else {
            Err(self.err_here(&format!("`{w}`")))
        }
    }

    fn skip_newlines(&mut self) {
        while matches!(self.peek(), Tok::Newline | Tok::Semi) {
            self.bump();
        }
    }

    /// Skips to the next line at brace depth zero, counting the braces
    /// already opened since the failed declaration began at `from`.
    fn recover(&mut self, from: usize) {
        let mut braces = 0usize;
        for t in &self.toks[from..self.pos] {
            match t.tok {
                Tok::LBrace => braces += 1,
                Tok::RBrace => braces = braces.saturating_sub(1),
                _ => {}
            }
        }
        loop {
            match self.peek() {
                Tok::Eof => return,
                Tok::Newline if braces == 0 => return,
                Tok::LBrace => braces += 1,
                Tok::RBrace => braces = braces.saturating_sub(1),
                _ => {}
            }
            self.bump();
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(Diagnostic::error(DiagCode::Syntax, self.span(), "nesting is too deep"));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn ident(&mut self, what: &str) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let span = self.bump().span;
                Ok((s, span))
            }
            _ => Err(self.err_here(what)),
        }
    }

    fn string(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.err_here(what)),
        }
    }

    /// End of a declaration line: newline, `;` or end of input.
    fn end_line(&mut self) -> PResult<()> {
        match self.peek() {
            Tok::Newline | Tok::Semi => {
                self.bump();
                Ok(())
            }
            Tok::Eof => Ok(()),
            _ => Err(Diagnostic::error(DiagCode::Syntax, self.span(), format!("unexpected {} after declaration", self.peek().describe()))),
        }
    }

    fn decl(&mut self) -> PResult<Decl> {
        let start = self.span();
        let word = match self.peek() {
            Tok::Ident(w) => w.clone(),
            _ => return Err(self.err_here("a declaration")),
        };
        let d = match word.as_str() {
            "simulation" => {
                self.bump();
                let name = self.string("a quoted simulation name")?;
                let description = if matches!(self.peek(), Tok::Str(_)) { self.string("a description")? } else { String::new() };
                Decl::Simulation { name, description, span: start.to(self.prev_span()) }
            }
            "actions" => {
                self.bump();
                let mut names = Vec::new();
                while let Tok::Ident(_) = self.peek() {
                    names.push(self.ident("an action name")?);
                }
                if names.is_empty() {
                    return Err(self.err_here("at least one action name"));
                }
                Decl::Actions { names, span: start.to(self.prev_span()) }
            }
            "max_steps" => {
                self.bump();
                match self.peek().clone() {
                    Tok::Int(n) => {
                        self.bump();
                        Decl::MaxSteps { value: n, span: start.to(self.prev_span()) }
                    }
                    _ => return Err(self.err_here("a step count")),
                }
            }
            "score" => {
                self.bump();
                let (id, _) = self.ident("the score variable")?;
                Decl::Score { id, span: start.to(self.prev_span()) }
            }
            "var" => {
                self.bump();
                Decl::Var(self.var_decl(start)?)
            }
            w => match FactorKind::from_keyword(w) {
                Some(kind) => {
                    self.bump();
                    Decl::Factor(self.factor_decl(kind, start)?)
                }
                None => return Err(Diagnostic::error(DiagCode::Syntax, start, format!("unknown declaration `{w}`"))),
            },
        };
        self.end_line()?;
        Ok(d)
    }

    fn var_decl(&mut self, start: Span) -> PResult<VarDecl> {
        let (id, _) = self.ident("a variable name")?;
        let label = if matches!(self.peek(), Tok::Str(_)) { Some(self.string("a label")?) } else { None };
        // `x:int` lexes the type as a symbol.
        let domain = match self.peek().clone() {
            Tok::Colon => {
                self.bump();
                self.domain()?
            }
            Tok::Sym(word) => {
                let span = self.bump().span;
                self.domain_named(&word, span)?
            }
            _ => return Err(self.err_here("`:` and a domain")),
        };
        let init = self.init()?;
        Ok(VarDecl { id, label, domain, init, span: start.to(self.prev_span()) })
    }

    fn domain(&mut self) -> PResult<Domain> {
        match self.peek().clone() {
            Tok::Ident(w) => {
                let span = self.bump().span;
                self.domain_named(&w, span)
            }
            _ => Err(self.err_here("a domain")),
        }
    }

    fn domain_named(&mut self, word: &str, span: Span) -> PResult<Domain> {
        match word {
            "bool" => Ok(Domain::Bool),
            "int" => {
                self.expect(&Tok::LBracket, "`[`")?;
                let lo = self.signed_int()?;
                self.expect(&Tok::Comma, "`,`")?;
                let hi = self.signed_int()?;
                self.expect(&Tok::RBracket, "`]`")?;
                Ok(Domain::Int { lo, hi })
            }
            "real" => {
                let (lo, hi) = self.real_bounds()?;
                Ok(Domain::Real { lo, hi })
            }
            "enum" => {
                self.expect(&Tok::LParen, "`(`")?;
                let mut labels = vec![self.ident("an enumeration label")?.0];
                while self.eat(&Tok::Comma) {
                    labels.push(self.ident("an enumeration label")?.0);
                }
                self.expect(&Tok::RParen, "`)`")?;
                Ok(Domain::Enum { labels })
            }
            w if w.starts_with("vec") && w.len() > 3 && w[3..].bytes().all(|b| b.is_ascii_digit()) => {
                let len = w[3..]
                    .parse::<usize>()
                    .map_err(|_| Diagnostic::error(DiagCode::Syntax, span, "vector length out of range"))?;
                let (lo, hi) = self.real_bounds()?;
                Ok(Domain::Vector { len, lo, hi })
            }
            other => Err(Diagnostic::error(DiagCode::Syntax, span, format!("unknown domain `{other}`"))),
        }
    }

    fn real_bounds(&mut self) -> PResult<(f64, f64)> {
        self.expect(&Tok::LBracket, "`[`")?;
        let lo = self.signed_number()?;
        self.expect(&Tok::Comma, "`,`")?;
        let hi = self.signed_number()?;
        self.expect(&Tok::RBracket, "`]`")?;
        Ok((lo, hi))
    }

    fn signed_int(&mut self) -> PResult<i64> {
        let neg = self.eat(&Tok::Minus);
        match self.peek().clone() {
            Tok::Int(n) => {
                let span = self.bump().span;
                int_value(n, neg).ok_or_else(|| Diagnostic::error(DiagCode::Syntax, span, "integer literal out of range"))
            }
            _ => Err(self.err_here("an integer")),
        }
    }

    fn signed_number(&mut self) -> PResult<f64> {
        let neg = self.eat(&Tok::Minus);
        let v = match self.peek().clone() {
            Tok::Int(n) => n as f64,
            Tok::Real(r) => r,
            _ => return Err(self.err_here("a number")),
        };
        self.bump();
        Ok(if neg { -v } else { v })
    }

    /// A constant: bool, signed number, `:symbol` or `[numbers]`.
    fn literal(&mut self) -> PResult<Value> {
        match self.peek().clone() {
            Tok::Ident(w) if w == "true" || w == "false" => {
                self.bump();
                Ok(Value::Bool(w == "true"))
            }
            Tok::Sym(s) => {
                self.bump();
                Ok(Value::Sym(s))
            }
            Tok::LBracket => {
                self.bump();
                let mut xs = Vec::new();
                if !self.at(&Tok::RBracket) {
                    xs.push(self.signed_number()?);
                    while self.eat(&Tok::Comma) {
                        xs.push(self.signed_number()?);
                    }
                }
                self.expect(&Tok::RBracket, "`]`")?;
                Ok(Value::Vector(xs))
            }
            Tok::Minus | Tok::Int(_) | Tok::Real(_) => {
                let neg = self.eat(&Tok::Minus);
                match self.peek().clone() {
                    Tok::Int(n) => {
                        let span = self.bump().span;
                        int_value(n, neg)
                            .map(Value::Int)
                            .ok_or_else(|| Diagnostic::error(DiagCode::Syntax, span, "integer literal out of range"))
                    }
                    Tok::Real(r) => {
                        self.bump();
                        Ok(Value::Real(if neg { -r } else { r }))
                    }
                    _ => Err(self.err_here("a number")),
                }
            }
            _ => Err(self.err_here("a constant")),
        }
    }

    fn init(&mut self) -> PResult<Init> {
        if self.eat(&Tok::Assign) {
            return Ok(Init::Point { value: self.literal()? });
        }
        self.expect(&Tok::Tilde, "`=` or `~` and an initial value")?;
        self.init_distribution()
    }

    fn init_distribution(&mut self) -> PResult<Init> {
        if self.at_word("uniform") {
            self.bump();
            return Ok(Init::Uniform);
        }
        self.expect_word("categorical")?;
        self.expect(&Tok::LParen, "`(`")?;
        let mut outcomes = Vec::new();
        loop {
            let v = self.literal()?;
            self.expect(&Tok::FatArrow, "`=>`")?;
            let w = self.signed_number()?;
            outcomes.push((v, w));
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(&Tok::RParen, "`)`")?;
        Ok(Init::Categorical { outcomes })
    }

    fn id_list(&mut self) -> PResult<Vec<(String, Span)>> {
        self.expect(&Tok::LParen, "`(`")?;
        let mut ids = Vec::new();
        if !self.at(&Tok::RParen) {
            ids.push(self.ident("a variable name")?);
            while self.eat(&Tok::Comma) {
                ids.push(self.ident("a variable name")?);
            }
        }
        self.expect(&Tok::RParen, "`)`")?;
        Ok(ids)
    }

    fn factor_decl(&mut self, kind: FactorKind, start: Span) -> PResult<FactorDecl> {
        let (id, _) = self.ident("a factor name")?;
        let order = if self.eat(&Tok::LBracket) {
            let n = self.signed_int()?;
            self.expect(&Tok::RBracket, "`]`")?;
            Some(n)
        } else {
            None
        };
        let scope = if self.at_word("reads") {
            self.bump();
            self.id_list()?
        } else {
            Vec::new()
        };
        let targets = if self.at_word("writes") {
            self.bump();
            self.id_list()?
        } else {
            Vec::new()
        };
        let body = self.block()?;
        Ok(FactorDecl { kind, id, order, scope, targets, body, span: start.to(self.prev_span()) })
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect(&Tok::LBrace, "`{`")?;
        self.enter()?;
        let body = self.stmts_until(&Tok::RBrace)?;
        self.leave();
        self.expect(&Tok::RBrace, "`}`")?;
        Ok(body)
    }

    fn stmts_until(&mut self, close: &Tok) -> PResult<Vec<Stmt>> {
        let mut body = Vec::new();
        loop {
            self.skip_newlines();
            if self.at(close) || self.at(&Tok::Eof) {
                return Ok(body);
            }
            body.push(self.stmt()?);
            match self.peek() {
                Tok::Newline | Tok::Semi => {}
                t if t == close => {}
                Tok::Eof => {}
                _ => return Err(self.err_here("end of statement")),
            }
        }
    }

    fn place(&mut self) -> PResult<Place> {
        let (var, span) = self.ident("a variable name")?;
        if self.eat(&Tok::LBracket) {
            let i = match self.peek().clone() {
                Tok::Int(n) => {
                    self.bump();
                    usize::try_from(n).map_err(|_| Diagnostic::error(DiagCode::Syntax, self.prev_span(), "index out of range"))?
                }
                _ => return Err(self.err_here("a constant component index")),
            };
            self.expect(&Tok::RBracket, "`]`")?;
            return Ok(Place { var, index: Some(i), span: span.to(self.prev_span()) });
        }
        Ok(Place { var, index: None, span })
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let start = self.span();
        let kind = match self.peek().clone() {
            Tok::Ident(w) if w == "if" => return self.if_stmt(),
            Tok::Ident(w) if w == "let" => {
                self.bump();
                let (name, _) = self.ident("a binding name")?;
                self.expect(&Tok::Assign, "`=`")?;
                StmtKind::Let { name, value: self.expr()? }
            }
            Tok::Ident(w) if ShapeKind::from_name(&w).is_some() && self.peek_at(1) == &Tok::LParen => {
                self.bump();
                self.emit(ShapeKind::from_name(&w).expect("checked above"))?
            }
            Tok::Ident(_) => {
                let target = self.place()?;
                match self.peek() {
                    Tok::Walrus => {
                        self.bump();
                        StmtKind::Assign { target, value: self.expr()? }
                    }
                    Tok::PlusEq => {
                        self.bump();
                        StmtKind::Increment { target, value: self.expr()? }
                    }
                    _ => return Err(self.err_here("`:=` or `+=`")),
                }
            }
            _ => return Err(self.err_here("a statement")),
        };
        Ok(Stmt::new(kind, start.to(self.prev_span())))
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        let start = self.span();
        self.enter()?;
        self.expect_word("if")?;
        let cond = self.expr()?;
        let then_body = self.block()?;
        let else_body = if self.at_word("else") {
            self.bump();
            if self.at_word("if") {
                vec![self.if_stmt()?]
            } else {
                self.block()?
            }
        } else {
            Vec::new()
        };
        self.leave();
        Ok(Stmt::new(StmtKind::If { cond, then_body, else_body }, start.to(self.prev_span())))
    }

    fn emit(&mut self, shape: ShapeKind) -> PResult<StmtKind> {
        self.expect(&Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        for _ in 0..shape.numeric_args() {
            args.push(self.expr()?);
            self.expect(&Tok::Comma, "`,`")?;
        }
        let color = match self.peek().clone() {
            Tok::Ident(c) => {
                let span = self.bump().span;
                Color::from_name(&c).ok_or_else(|| Diagnostic::error(DiagCode::Syntax, span, format!("unknown colour `{c}`")))?
            }
            _ => return Err(self.err_here("a colour name")),
        };
        let text = if shape == ShapeKind::Text {
            self.expect(&Tok::Comma, "`,`")?;
            Some(self.string("a quoted string")?)
        } else {
            None
        };
        self.expect(&Tok::RParen, "`)`")?;
        Ok(StmtKind::Emit { shape, args, color, text })
    }

    pub(crate) fn expr(&mut self) -> PResult<Expr> {
        self.enter()?;
        let e = self.expr_inner();
        self.leave();
        e
    }

    fn expr_inner(&mut self) -> PResult<Expr> {
        let start = self.span();
        if self.at_word("if") {
            return self.if_expr(start);
        }
        if self.at_word("let") {
            return self.let_expr(start);
        }
        self.binary(1)
    }

    /// Precedence climbing over binary operators. Comparisons do not chain.
    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        let mut compared = false;
        while let Some(op) = binop_of(self.peek()) {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            if prec == 4 {
                if compared {
                    return Err(self.chained_comparison());
                }
                compared = true;
            }
            self.bump();
            self.enter()?;
            let rhs = self.binary(prec + 1);
            self.leave();
            let rhs = rhs?;
            let span = lhs.span.to(rhs.span);
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let start = self.span();
        if self.at(&Tok::Minus) {
            self.bump();
            // `-3` is a literal unless indexed; `-(3)` stays a negation.
            if matches!(self.peek(), Tok::Int(_) | Tok::Real(_)) && self.peek_at(1) != &Tok::LBracket {
                let t = self.bump();
                let span = start.to(t.span);
                let v = match t.tok {
                    Tok::Int(n) => Value::Int(
                        int_value(n, true).ok_or_else(|| Diagnostic::error(DiagCode::Syntax, span, "integer literal out of range"))?,
                    ),
                    Tok::Real(r) => Value::Real(-r),
                    _ => unreachable!(),
                };
                return Ok(Expr::new(ExprKind::Lit(v), span));
            }
            self.enter()?;
            let e = self.unary();
            self.leave();
            let e = e?;
            let span = start.to(e.span);
            return Ok(Expr::new(ExprKind::Unary(UnOp::Neg, Box::new(e)), span));
        }
        if self.at_word("not") {
            self.bump();
            self.enter()?;
            let e = self.unary();
            self.leave();
            let e = e?;
            let span = start.to(e.span);
            return Ok(Expr::new(ExprKind::Unary(UnOp::Not, Box::new(e)), span));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        while self.at(&Tok::LBracket) {
            self.bump();
            let i = self.expr()?;
            self.expect(&Tok::RBracket, "`]`")?;
            let span = e.span.to(self.prev_span());
            e = Expr::new(ExprKind::Index(Box::new(e), Box::new(i)), span);
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let start = self.span();
        let kind = match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                ExprKind::Lit(Value::Int(
                    int_value(n, false).ok_or_else(|| Diagnostic::error(DiagCode::Syntax, start, "integer literal out of range"))?,
                ))
            }
            Tok::Real(r) => {
                self.bump();
                ExprKind::Lit(Value::Real(r))
            }
            Tok::Sym(s) => {
                self.bump();
                ExprKind::Lit(Value::Sym(s))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                return Ok(e);
            }
            Tok::LBracket => {
                self.bump();
                ExprKind::VecLit(self.expr_list(&Tok::RBracket, "`]`")?)
            }
            Tok::Ident(w) => match w.as_str() {
                "true" | "false" => {
                    self.bump();
                    ExprKind::Lit(Value::Bool(w == "true"))
                }
                "action" => {
                    self.bump();
                    ExprKind::Action
                }
                "if" | "let" => return self.expr(),
                _ if KEYWORDS.contains(&w.as_str()) => return Err(self.err_here("an expression")),
                _ => {
                    self.bump();
                    match Builtin::from_name(&w) {
                        Some(b) if self.at(&Tok::LParen) => self.call(b, start)?,
                        _ => ExprKind::Var(w),
                    }
                }
            },
            _ => return Err(self.err_here("an expression")),
        };
        Ok(Expr::new(kind, start.to(self.prev_span())))
    }
}

impl Parser {
    // Kept out of `primary` so its frame stays small on deep nesting.
    fn expr_list(&mut self, close: &Tok, what: &str) -> PResult<Vec<Expr>> {
        let mut items = Vec::new();
        if !self.at(close) {
            items.push(self.expr()?);
            while self.eat(&Tok::Comma) {
                items.push(self.expr()?);
            }
        }
        self.expect(close, what)?;
        Ok(items)
    }

    fn call(&mut self, b: Builtin, start: Span) -> PResult<ExprKind> {
        self.bump();
        let args = self.expr_list(&Tok::RParen, "`)`")?;
        let ok = match b.arity() {
            Some(n) => args.len() == n,
            None => !args.is_empty(),
        };
        if !ok {
            let want = b.arity().map_or("one or more".to_string(), |n| n.to_string());
            return Err(Diagnostic::error(
                DiagCode::Syntax,
                start.to(self.prev_span()),
                format!("{} takes {want} argument(s), got {}", b.name(), args.len()),
            ));
        }
        Ok(ExprKind::Call(b, args))
    }

    fn if_expr(&mut self, start: Span) -> PResult<Expr> {
        self.bump();
        let c = self.expr()?;
        self.expect_word("then")?;
        let t = self.expr()?;
        self.expect_word("else")?;
        let f = self.expr()?;
        Ok(Expr::new(ExprKind::If(Box::new(c), Box::new(t), Box::new(f)), start.to(self.prev_span())))
    }

    fn let_expr(&mut self, start: Span) -> PResult<Expr> {
        self.bump();
        let (name, _) = self.ident("a binding name")?;
        self.expect(&Tok::Assign, "`=`")?;
        let v = self.expr()?;
        self.expect_word("in")?;
        let body = self.expr()?;
        Ok(Expr::new(ExprKind::Let(name, Box::new(v), Box::new(body)), start.to(self.prev_span())))
    }

    fn chained_comparison(&self) -> Diagnostic {
        Diagnostic::error(DiagCode::Syntax, self.span(), "comparisons cannot be chained; add parentheses")
    }
}

fn int_value(n: u64, neg: bool) -> Option<i64> {
    if neg {
        if n == 1u64 << 63 {
            Some(i64::MIN)
        } else {
            i64::try_from(n).ok().map(|v| -v)
        }
    } else {
        i64::try_from(n).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_source_is_missing_declarations() {
        let d = parse("").unwrap_err();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, DiagCode::MissingDeclaration);
        assert_eq!(parse("  \n# only a comment\n").unwrap_err()[0].code, DiagCode::MissingDeclaration);
    }

    #[test]
    fn stray_token_after_block_is_one_diagnostic() {
        let src = "actions NOOP\nmodel m reads(x) writes(x) {\n  x := x\n} oops\nscore s\n";
        let d = parse(src).unwrap_err();
        assert_eq!(d.len(), 1, "{d:?}");
        assert_eq!(d[0].code, DiagCode::Syntax);
        assert_eq!(&src[d[0].span.start..d[0].span.end], "oops");
    }

    #[test]
    fn precedence_and_negative_literals() {
        let body = parse_body("x := 1 + 2 * -3 - -(4)").unwrap();
        let StmtKind::Assign { value, .. } = &body[0].kind else { panic!() };
        let ExprKind::Binary(BinOp::Sub, lhs, rhs) = &value.kind else { panic!("{value:?}") };
        assert!(matches!(lhs.kind, ExprKind::Binary(BinOp::Add, _, _)));
        assert!(matches!(&rhs.kind, ExprKind::Unary(UnOp::Neg, inner) if inner.kind == ExprKind::Lit(Value::Int(4))));
        let ExprKind::Binary(BinOp::Add, _, mul) = &lhs.kind else { panic!() };
        assert!(matches!(&mul.kind, ExprKind::Binary(BinOp::Mul, _, r) if r.kind == ExprKind::Lit(Value::Int(-3))));
    }

    #[test]
    fn chained_comparisons_are_rejected() {
        assert!(parse_body("x := a < b < c").is_err());
        assert!(parse_body("x := (a < b) == c").is_ok());
    }

    #[test]
    fn deep_nesting_is_a_diagnostic() {
        // Run on a small stack to keep a safety margin below the default.
        std::thread::Builder::new()
            .stack_size(1024 * 1024)
            .spawn(|| {
                let src = format!("x := {}1{}", "(".repeat(10_000), ")".repeat(10_000));
                assert!(parse_body(&src).is_err());
                let src = format!("x := {}1", "-".repeat(10_000));
                assert!(parse_body(&src).is_err());
                let src = format!("{}x := 1{}", "if true {\n".repeat(10_000), "}\n".repeat(10_000));
                assert!(parse_body(&src).is_err());
            })
            .unwrap()
            .join()
            .unwrap();
    }

    #[test]
    fn fragments() {
        assert_eq!(parse_domain("vec2[-1.0, 1]").unwrap(), Domain::Vector { len: 2, lo: -1.0, hi: 1.0 });
        assert_eq!(parse_init("~ uniform").unwrap(), Init::Uniform);
        assert_eq!(parse_init("uniform").unwrap(), Init::Uniform);
        assert_eq!(parse_init("-3").unwrap(), Init::Point { value: Value::Int(-3) });
        assert_eq!(parse_init("= :a").unwrap(), Init::Point { value: Value::Sym("a".into()) });
        assert!(parse_init("= 3 4").is_err());
    }

    #[test]
    fn recovery_reports_errors_in_several_declarations() {
        let d = parse("var x: int[0, 3] = \nvar y: bogus\nactions NOOP\n").unwrap_err();
        assert_eq!(d.len(), 2, "{d:?}");
    }
}

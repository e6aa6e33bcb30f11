//! Expression programs: the bodies of factors.
//!
//! Bodies are loop-free statement lists over pure expressions, so evaluation
//! is linear in body size.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diag::Span;
use crate::value::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
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

impl BinOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(&self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Builtin {
    Clamp,
    Abs,
    Min,
    Max,
    Bernoulli,
    UniformInt,
    UniformReal,
    Categorical,
}

impl Builtin {
    pub const ALL: [Builtin; 8] = [
        Builtin::Clamp,
        Builtin::Abs,
        Builtin::Min,
        Builtin::Max,
        Builtin::Bernoulli,
        Builtin::UniformInt,
        Builtin::UniformReal,
        Builtin::Categorical,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Builtin::Clamp => "clamp",
            Builtin::Abs => "abs",
            Builtin::Min => "min",
            Builtin::Max => "max",
            Builtin::Bernoulli => "bernoulli",
            Builtin::UniformInt => "uniform_int",
            Builtin::UniformReal => "uniform_real",
            Builtin::Categorical => "categorical",
        }
    }

    pub fn from_name(name: &str) -> Option<Builtin> {
        Self::ALL.into_iter().find(|b| b.name() == name)
    }

    /// Accepted argument count; `None` means one or more.
    pub fn arity(&self) -> Option<usize> {
        match self {
            Builtin::Clamp => Some(3),
            Builtin::Abs | Builtin::Bernoulli => Some(1),
            Builtin::Min | Builtin::Max | Builtin::UniformInt | Builtin::UniformReal => Some(2),
            Builtin::Categorical => None,
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, Builtin::Bernoulli | Builtin::UniformInt | Builtin::UniformReal | Builtin::Categorical)
    }
}

/// The fixed 16-colour palette of view primitives. The discriminant is the
/// raster cell value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Black = 0,
    White,
    Red,
    Green,
    Blue,
    Yellow,
    Cyan,
    Magenta,
    Gray,
    Darkgray,
    Orange,
    Purple,
    Brown,
    Pink,
    Lime,
    Navy,
}

impl Color {
    pub const PALETTE: [Color; 16] = [
        Color::Black,
        Color::White,
        Color::Red,
        Color::Green,
        Color::Blue,
        Color::Yellow,
        Color::Cyan,
        Color::Magenta,
        Color::Gray,
        Color::Darkgray,
        Color::Orange,
        Color::Purple,
        Color::Brown,
        Color::Pink,
        Color::Lime,
        Color::Navy,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Color::Black => "black",
            Color::White => "white",
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
            Color::Cyan => "cyan",
            Color::Magenta => "magenta",
            Color::Gray => "gray",
            Color::Darkgray => "darkgray",
            Color::Orange => "orange",
            Color::Purple => "purple",
            Color::Brown => "brown",
            Color::Pink => "pink",
            Color::Lime => "lime",
            Color::Navy => "navy",
        }
    }

    pub fn from_name(name: &str) -> Option<Color> {
        Self::PALETTE.into_iter().find(|c| c.name() == name)
    }

    /// Approximate 24-bit RGB, for terminal rendering.
    pub fn rgb(&self) -> (u8, u8, u8) {
        match self {
            Color::Black => (0, 0, 0),
            Color::White => (255, 255, 255),
            Color::Red => (220, 40, 40),
            Color::Green => (40, 170, 60),
            Color::Blue => (50, 90, 230),
            Color::Yellow => (240, 220, 40),
            Color::Cyan => (40, 210, 220),
            Color::Magenta => (210, 50, 210),
            Color::Gray => (150, 150, 150),
            Color::Darkgray => (80, 80, 80),
            Color::Orange => (245, 140, 30),
            Color::Purple => (120, 50, 170),
            Color::Brown => (130, 80, 40),
            Color::Pink => (250, 160, 190),
            Color::Lime => (160, 240, 60),
            Color::Navy => (20, 30, 110),
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Rect,
    Circle,
    Text,
}

impl ShapeKind {
    pub fn name(&self) -> &'static str {
        match self {
            ShapeKind::Rect => "rect",
            ShapeKind::Circle => "circle",
            ShapeKind::Text => "text",
        }
    }

    pub fn from_name(name: &str) -> Option<ShapeKind> {
        match name {
            "rect" => Some(ShapeKind::Rect),
            "circle" => Some(ShapeKind::Circle),
            "text" => Some(ShapeKind::Text),
            _ => None,
        }
    }

    /// Number of numeric arguments before the colour.
    pub fn numeric_args(&self) -> usize {
        match self {
            ShapeKind::Rect => 4,
            ShapeKind::Circle => 3,
            ShapeKind::Text => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ExprKind {
    /// Scalar literal (bool, int, real or `:symbol`).
    Lit(Value),
    Var(String),
    /// The current action token; controller bodies only.
    Action,
    VecLit(Vec<Expr>),
    Index(Box<Expr>, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Let(String, Box<Expr>, Box<Expr>),
    Call(Builtin, Vec<Expr>),
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Self { kind, span }
    }

    pub fn lit(v: Value) -> Self {
        Self::new(ExprKind::Lit(v), Span::default())
    }

    pub fn var(name: &str) -> Self {
        Self::new(ExprKind::Var(name.to_string()), Span::default())
    }
}

/// A write destination: a variable, or one component of a vector variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Place {
    pub var: String,
    pub index: Option<usize>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StmtKind {
    Assign { target: Place, value: Expr },
    Increment { target: Place, value: Expr },
    /// Binds `name` for the remainder of the enclosing block.
    Let { name: String, value: Expr },
    If { cond: Expr, then_body: Vec<Stmt>, else_body: Vec<Stmt> },
    Emit { shape: ShapeKind, args: Vec<Expr>, color: Color, text: Option<String> },
}

impl Stmt {
    pub fn new(kind: StmtKind, span: Span) -> Self {
        Self { kind, span }
    }
}

/// What a body touches, gathered in one pass.
#[derive(Debug, Default)]
pub struct BodyFacts {
    /// State-variable reads (excluding let-bound names), with the first span.
    pub reads: Vec<(String, Span)>,
    /// Writes: place, whether it is an increment.
    pub writes: Vec<(Place, bool)>,
    pub action_reads: Vec<Span>,
    pub emits: Vec<Span>,
    /// Symbols compared directly against `action`.
    pub action_symbols: Vec<(String, Span)>,
}

impl BodyFacts {
    pub fn of(body: &[Stmt]) -> Self {
        let mut facts = BodyFacts::default();
        let mut bound = Vec::new();
        facts.block(body, &mut bound);
        facts
    }

    pub fn read_set(&self) -> BTreeSet<&str> {
        self.reads.iter().map(|(v, _)| v.as_str()).collect()
    }

    pub fn write_set(&self) -> BTreeSet<&str> {
        self.writes.iter().map(|(p, _)| p.var.as_str()).collect()
    }

    fn note_read(&mut self, name: &str, span: Span) {
        if !self.reads.iter().any(|(n, _)| n == name) {
            self.reads.push((name.to_string(), span));
        }
    }

    fn block(&mut self, body: &[Stmt], bound: &mut Vec<String>) {
        let mark = bound.len();
        for stmt in body {
            match &stmt.kind {
                StmtKind::Assign { target, value } | StmtKind::Increment { target, value } => {
                    self.expr(value, bound);
                    let inc = matches!(stmt.kind, StmtKind::Increment { .. });
                    self.writes.push((target.clone(), inc));
                }
                StmtKind::Let { name, value } => {
                    self.expr(value, bound);
                    bound.push(name.clone());
                }
                StmtKind::If { cond, then_body, else_body } => {
                    self.expr(cond, bound);
                    self.block(then_body, bound);
                    self.block(else_body, bound);
                }
                StmtKind::Emit { args, .. } => {
                    self.emits.push(stmt.span);
                    for a in args {
                        self.expr(a, bound);
                    }
                }
            }
        }
        bound.truncate(mark);
    }

    fn expr(&mut self, e: &Expr, bound: &mut Vec<String>) {
        match &e.kind {
            ExprKind::Lit(_) => {}
            ExprKind::Var(name) => {
                if !bound.iter().any(|b| b == name) {
                    self.note_read(name, e.span);
                }
            }
            ExprKind::Action => self.action_reads.push(e.span),
            ExprKind::VecLit(items) | ExprKind::Call(_, items) => {
                for i in items {
                    self.expr(i, bound);
                }
            }
            ExprKind::Index(a, b) => {
                self.expr(a, bound);
                self.expr(b, bound);
            }
            ExprKind::Unary(_, a) => self.expr(a, bound),
            ExprKind::Binary(op, a, b) => {
                if matches!(op, BinOp::Eq | BinOp::Ne) {
                    for (x, y) in [(a, b), (b, a)] {
                        if let (ExprKind::Action, ExprKind::Lit(Value::Sym(s))) = (&x.kind, &y.kind) {
                            self.action_symbols.push((s.clone(), y.span));
                        }
                    }
                }
                self.expr(a, bound);
                self.expr(b, bound);
            }
            ExprKind::If(c, t, f) => {
                self.expr(c, bound);
                self.expr(t, bound);
                self.expr(f, bound);
            }
            ExprKind::Let(name, value, body) => {
                self.expr(value, bound);
                bound.push(name.clone());
                self.expr(body, bound);
                bound.pop();
            }
        }
    }
}

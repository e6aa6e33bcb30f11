//! Evaluation of factor bodies against a state snapshot.
//!
//! A body never mutates state directly: it yields an ordered list of
//! [`Effect`]s (and, for views, [`Shape`]s). [`apply_effects`] folds a
//! phase's effects onto the phase-start state, so every factor in a phase
//! reads the same snapshot.

use std::collections::BTreeSet;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::expr::{BinOp, Builtin, Color, Expr, ExprKind, Place, ShapeKind, Stmt, StmtKind, UnOp};
use crate::ir::FactoredPomdp;
use crate::rng::Chooser;
use crate::value::{coerce, quantize_score, Value};

pub type StateMap = IndexMap<String, Value>;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("type error: {0}")]
    Type(String),
    #[error("invalid argument to {func}: {message}")]
    BadArgument { func: &'static str, message: String },
    #[error("index {index} out of range for vector of length {len}")]
    IndexOutOfRange { index: i64, len: usize },
    #[error("read of unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("cannot store into `{var}`: {message}")]
    Store { var: String, message: String },
    #[error("not enumerable: {0}")]
    NotEnumerable(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    DivisionByZero,
    IntegerOverflow,
    Clamped { var: String },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::DivisionByZero => f.write_str("division by zero evaluated to 0"),
            Warning::IntegerOverflow => f.write_str("integer overflow saturated"),
            Warning::Clamped { var } => write!(f, "out-of-domain write to `{var}` clamped"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WriteOp {
    Assign,
    Add,
}

/// One pending write produced by a body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub var: String,
    pub index: Option<usize>,
    pub op: WriteOp,
    pub value: Value,
}

/// A drawing primitive emitted by a view body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub kind: ShapeKind,
    pub color: Color,
    /// rect: x, y, w, h; circle: x, y, r; text: x, y, size.
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Default)]
pub struct BodyOutput {
    pub effects: Vec<Effect>,
    pub shapes: Vec<Shape>,
    pub warnings: Vec<Warning>,
}

/// Executes `body` against `state`. `action` is `Some` only for controllers.
pub fn exec_body(
    body: &[Stmt],
    state: &StateMap,
    action: Option<&str>,
    chooser: &mut dyn Chooser,
) -> Result<BodyOutput, EvalError> {
    let mut ev = Evaluator { state, action, chooser, locals: Vec::new(), out: BodyOutput::default() };
    ev.block(body)?;
    Ok(ev.out)
}

struct Evaluator<'a> {
    state: &'a StateMap,
    action: Option<&'a str>,
    chooser: &'a mut dyn Chooser,
    locals: Vec<(String, Value)>,
    out: BodyOutput,
}

fn type_err(msg: impl Into<String>) -> EvalError {
    EvalError::Type(msg.into())
}

impl Evaluator<'_> {
    fn warn(&mut self, w: Warning) {
        if !self.out.warnings.contains(&w) {
            self.out.warnings.push(w);
        }
    }

    fn block(&mut self, body: &[Stmt]) -> Result<(), EvalError> {
        let mark = self.locals.len();
        for stmt in body {
            self.stmt(stmt)?;
        }
        self.locals.truncate(mark);
        Ok(())
    }

    fn stmt(&mut self, stmt: &Stmt) -> Result<(), EvalError> {
        match &stmt.kind {
            StmtKind::Assign { target, value } => {
                let v = self.expr(value)?;
                self.push_effect(target, WriteOp::Assign, v);
            }
            StmtKind::Increment { target, value } => {
                let v = self.expr(value)?;
                self.push_effect(target, WriteOp::Add, v);
            }
            StmtKind::Let { name, value } => {
                let v = self.expr(value)?;
                self.locals.push((name.clone(), v));
            }
            StmtKind::If { cond, then_body, else_body } => {
                if self.truth(cond)? {
                    self.block(then_body)?;
                } else {
                    self.block(else_body)?;
                }
            }
            StmtKind::Emit { shape, args, color, text } => {
                let mut params = Vec::with_capacity(args.len());
                for a in args {
                    let v = self.expr(a)?;
                    params.push(v.as_f64().ok_or_else(|| {
                        type_err(format!("{} argument must be numeric, found {}", shape.name(), v.type_name()))
                    })?);
                }
                self.out.shapes.push(Shape { kind: *shape, color: *color, params, text: text.clone() });
            }
        }
        Ok(())
    }

    fn push_effect(&mut self, target: &Place, op: WriteOp, value: Value) {
        self.out.effects.push(Effect { var: target.var.clone(), index: target.index, op, value });
    }

    fn truth(&mut self, e: &Expr) -> Result<bool, EvalError> {
        match self.expr(e)? {
            Value::Bool(b) => Ok(b),
            other => Err(type_err(format!("condition must be bool, found {}", other.type_name()))),
        }
    }

    fn lookup(&self, name: &str) -> Result<Value, EvalError> {
        if let Some((_, v)) = self.locals.iter().rev().find(|(n, _)| n == name) {
            return Ok(v.clone());
        }
        self.state.get(name).cloned().ok_or_else(|| EvalError::UnknownVariable(name.to_string()))
    }

    fn expr(&mut self, e: &Expr) -> Result<Value, EvalError> {
        match &e.kind {
            ExprKind::Lit(v) => Ok(v.clone()),
            ExprKind::Var(name) => self.lookup(name),
            ExprKind::Action => match self.action {
                Some(a) => Ok(Value::Sym(a.to_string())),
                None => Err(type_err("`action` is only available in controller bodies")),
            },
            ExprKind::VecLit(items) => {
                let mut xs = Vec::with_capacity(items.len());
                for i in items {
                    let v = self.expr(i)?;
                    xs.push(v.as_f64().ok_or_else(|| type_err("vector elements must be numeric"))?);
                }
                Ok(Value::Vector(xs))
            }
            ExprKind::Index(base, idx) => {
                let b = self.expr(base)?;
                let i = self.expr(idx)?;
                match (b, i) {
                    (Value::Vector(xs), Value::Int(i)) => usize::try_from(i)
                        .ok()
                        .and_then(|u| xs.get(u).copied())
                        .map(Value::Real)
                        .ok_or(EvalError::IndexOutOfRange { index: i, len: xs.len() }),
                    (b, i) => Err(type_err(format!("cannot index {} with {}", b.type_name(), i.type_name()))),
                }
            }
            ExprKind::Unary(op, a) => {
                let v = self.expr(a)?;
                match (op, v) {
                    (UnOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
                    (UnOp::Neg, Value::Int(i)) => Ok(Value::Int(i.checked_neg().unwrap_or_else(|| {
                        self.warn(Warning::IntegerOverflow);
                        i64::MAX
                    }))),
                    (UnOp::Neg, Value::Real(r)) => Ok(Value::Real(-r)),
                    (UnOp::Neg, Value::Vector(xs)) => Ok(Value::Vector(xs.into_iter().map(|x| -x).collect())),
                    (op, v) => Err(type_err(format!("cannot apply {op:?} to {}", v.type_name()))),
                }
            }
            ExprKind::Binary(BinOp::And, a, b) => Ok(Value::Bool(self.truth(a)? && self.truth(b)?)),
            ExprKind::Binary(BinOp::Or, a, b) => Ok(Value::Bool(self.truth(a)? || self.truth(b)?)),
            ExprKind::Binary(op, a, b) => {
                let x = self.expr(a)?;
                let y = self.expr(b)?;
                self.binary(*op, x, y)
            }
            ExprKind::If(c, t, f) => {
                if self.truth(c)? {
                    self.expr(t)
                } else {
                    self.expr(f)
                }
            }
            ExprKind::Let(name, value, body) => {
                let v = self.expr(value)?;
                self.locals.push((name.clone(), v));
                let r = self.expr(body);
                self.locals.pop();
                r
            }
            ExprKind::Call(func, args) => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.expr(a)?);
                }
                self.call(*func, vals)
            }
        }
    }

    pub(crate) fn binary(&mut self, op: BinOp, x: Value, y: Value) -> Result<Value, EvalError> {
        match op {
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Rem => {
                let mut w = Vec::new();
                let r = arith(op, x, y, &mut w);
                for warning in w {
                    self.warn(warning);
                }
                r
            }
            BinOp::Eq | BinOp::Ne => {
                let eq = values_equal(&x, &y)?;
                Ok(Value::Bool(if op == BinOp::Eq { eq } else { !eq }))
            }
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                let ord = match (&x, &y) {
                    (Value::Int(a), Value::Int(b)) => a.partial_cmp(b),
                    _ => match (x.as_f64(), y.as_f64()) {
                        (Some(a), Some(b)) => a.partial_cmp(&b),
                        _ => {
                            return Err(type_err(format!("cannot order {} and {}", x.type_name(), y.type_name())))
                        }
                    },
                };
                let r = match ord {
                    None => false,
                    Some(o) => match op {
                        BinOp::Lt => o.is_lt(),
                        BinOp::Le => o.is_le(),
                        BinOp::Gt => o.is_gt(),
                        _ => o.is_ge(),
                    },
                };
                Ok(Value::Bool(r))
            }
            BinOp::And | BinOp::Or => unreachable!("short-circuit operators handled by the caller"),
        }
    }

    fn call(&mut self, func: Builtin, args: Vec<Value>) -> Result<Value, EvalError> {
        let name = func.name();
        let num = |v: &Value| v.as_f64().ok_or_else(|| type_err(format!("{name} expects numeric arguments")));
        match func {
            Builtin::Clamp => match (&args[0], &args[1], &args[2]) {
                (Value::Int(x), Value::Int(lo), Value::Int(hi)) => {
                    if lo > hi {
                        return Err(EvalError::BadArgument { func: "clamp", message: format!("lo {lo} > hi {hi}") });
                    }
                    Ok(Value::Int((*x).clamp(*lo, *hi)))
                }
                _ => {
                    let (x, lo, hi) = (num(&args[0])?, num(&args[1])?, num(&args[2])?);
                    if lo > hi || lo.is_nan() || hi.is_nan() {
                        return Err(EvalError::BadArgument { func: "clamp", message: format!("lo {lo} > hi {hi}") });
                    }
                    Ok(Value::Real(x.max(lo).min(hi)))
                }
            },
            Builtin::Abs => match &args[0] {
                Value::Int(i) => Ok(Value::Int(i.checked_abs().unwrap_or_else(|| {
                    self.warn(Warning::IntegerOverflow);
                    i64::MAX
                }))),
                v => Ok(Value::Real(num(v)?.abs())),
            },
            Builtin::Min | Builtin::Max => match (&args[0], &args[1]) {
                (Value::Int(a), Value::Int(b)) => Ok(Value::Int(if func == Builtin::Min { *a.min(b) } else { *a.max(b) })),
                (a, b) => {
                    let (a, b) = (num(a)?, num(b)?);
                    Ok(Value::Real(if func == Builtin::Min { a.min(b) } else { a.max(b) }))
                }
            },
            Builtin::Bernoulli => {
                let p = num(&args[0])?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(EvalError::BadArgument { func: "bernoulli", message: format!("p = {p} not in [0, 1]") });
                }
                Ok(Value::Bool(self.chooser.bernoulli(p)?))
            }
            Builtin::UniformInt => match (&args[0], &args[1]) {
                (Value::Int(a), Value::Int(b)) => {
                    if a > b {
                        return Err(EvalError::BadArgument { func: "uniform_int", message: format!("{a} > {b}") });
                    }
                    Ok(Value::Int(self.chooser.uniform_int(*a, *b)?))
                }
                _ => Err(type_err("uniform_int expects int arguments")),
            },
            Builtin::UniformReal => {
                let (a, b) = (num(&args[0])?, num(&args[1])?);
                if !(a.is_finite() && b.is_finite()) || a > b {
                    return Err(EvalError::BadArgument { func: "uniform_real", message: format!("[{a}, {b}]") });
                }
                Ok(Value::Real(self.chooser.uniform_real(a, b)?))
            }
            Builtin::Categorical => {
                let ws = args.iter().map(num).collect::<Result<Vec<_>, _>>()?;
                let total: f64 = ws.iter().sum();
                if ws.iter().any(|w| !w.is_finite() || *w < 0.0) || !(total > 0.0 && total.is_finite()) {
                    return Err(EvalError::BadArgument {
                        func: "categorical",
                        message: "weights must be non-negative with a positive sum".into(),
                    });
                }
                Ok(Value::Int(self.chooser.categorical(&ws)? as i64))
            }
        }
    }
}

fn values_equal(x: &Value, y: &Value) -> Result<bool, EvalError> {
    Ok(match (x, y) {
        (Value::Int(a), Value::Int(b)) => a == b,
        (Value::Bool(a), Value::Bool(b)) => a == b,
        (Value::Sym(a), Value::Sym(b)) => a == b,
        (Value::Vector(a), Value::Vector(b)) => a == b,
        _ => match (x.as_f64(), y.as_f64()) {
            (Some(a), Some(b)) => a == b,
            _ => return Err(type_err(format!("cannot compare {} with {}", x.type_name(), y.type_name()))),
        },
    })
}

/// Arithmetic with the language's total semantics: division or remainder by
/// zero yields 0, integer overflow saturates. Both are reported as warnings.
pub fn arith(op: BinOp, x: Value, y: Value, warnings: &mut Vec<Warning>) -> Result<Value, EvalError> {
    match (x, y) {
        (Value::Int(a), Value::Int(b)) => {
            let r = match op {
                BinOp::Add => a.checked_add(b),
                BinOp::Sub => a.checked_sub(b),
                BinOp::Mul => a.checked_mul(b),
                BinOp::Div | BinOp::Rem if b == 0 => {
                    warnings.push(Warning::DivisionByZero);
                    return Ok(Value::Int(0));
                }
                BinOp::Div => a.checked_div(b),
                BinOp::Rem => a.checked_rem_euclid(b),
                _ => unreachable!(),
            };
            Ok(Value::Int(r.unwrap_or_else(|| {
                warnings.push(Warning::IntegerOverflow);
                let wide = match op {
                    BinOp::Add => i128::from(a) + i128::from(b),
                    BinOp::Sub => i128::from(a) - i128::from(b),
                    BinOp::Mul => i128::from(a) * i128::from(b),
                    BinOp::Div => -i128::from(a),
                    _ => 0,
                };
                wide.clamp(i128::from(i64::MIN), i128::from(i64::MAX)) as i64
            })))
        }
        (Value::Vector(a), Value::Vector(b)) if matches!(op, BinOp::Add | BinOp::Sub) => {
            if a.len() != b.len() {
                return Err(type_err(format!("vector length mismatch: {} vs {}", a.len(), b.len())));
            }
            let sign = if op == BinOp::Add { 1.0 } else { -1.0 };
            Ok(Value::Vector(a.iter().zip(&b).map(|(x, y)| x + sign * y).collect()))
        }
        (Value::Vector(a), s) if matches!(op, BinOp::Mul | BinOp::Div) && s.as_f64().is_some() => {
            let k = s.as_f64().unwrap_or_default();
            if op == BinOp::Div && k == 0.0 {
                warnings.push(Warning::DivisionByZero);
                return Ok(Value::Vector(vec![0.0; a.len()]));
            }
            Ok(Value::Vector(a.into_iter().map(|x| if op == BinOp::Mul { x * k } else { x / k }).collect()))
        }
        (s, Value::Vector(b)) if op == BinOp::Mul && s.as_f64().is_some() => {
            let k = s.as_f64().unwrap_or_default();
            Ok(Value::Vector(b.into_iter().map(|x| x * k).collect()))
        }
        (x, y) => {
            let (Some(a), Some(b)) = (x.as_f64(), y.as_f64()) else {
                return Err(type_err(format!(
                    "cannot apply `{}` to {} and {}",
                    op.symbol(),
                    x.type_name(),
                    y.type_name()
                )));
            };
            let r = match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div | BinOp::Rem if b == 0.0 => {
                    warnings.push(Warning::DivisionByZero);
                    0.0
                }
                BinOp::Div => a / b,
                BinOp::Rem => a.rem_euclid(b),
                _ => unreachable!(),
            };
            Ok(Value::Real(r))
        }
    }
}

/// Folds `effects` (in order) onto `base`: assignments overwrite, increments
/// accumulate. Every written variable is then coerced into its domain, with
/// clamping reported as a warning; the score is kept on its exact grid.
pub fn apply_effects<'e>(
    pomdp: &FactoredPomdp,
    base: &StateMap,
    effects: impl IntoIterator<Item = &'e Effect>,
    warnings: &mut Vec<Warning>,
) -> Result<StateMap, EvalError> {
    let mut next = base.clone();
    let mut touched = BTreeSet::new();
    for eff in effects {
        let cur = next.get_mut(&eff.var).ok_or_else(|| EvalError::UnknownVariable(eff.var.clone()))?;
        match eff.index {
            None => {
                *cur = match eff.op {
                    WriteOp::Assign => eff.value.clone(),
                    WriteOp::Add => arith(BinOp::Add, cur.clone(), eff.value.clone(), warnings)?,
                };
            }
            Some(i) => {
                let Value::Vector(xs) = cur else {
                    return Err(type_err(format!("`{}` is not a vector", eff.var)));
                };
                let len = xs.len();
                let slot = xs.get_mut(i).ok_or(EvalError::IndexOutOfRange { index: i as i64, len })?;
                let v = eff
                    .value
                    .as_f64()
                    .ok_or_else(|| type_err(format!("component of `{}` must be numeric", eff.var)))?;
                *slot = match eff.op {
                    WriteOp::Assign => v,
                    WriteOp::Add => *slot + v,
                };
            }
        }
        touched.insert(eff.var.as_str());
    }
    for var in touched {
        let decl = pomdp.variable(var).ok_or_else(|| EvalError::UnknownVariable(var.to_string()))?;
        let raw = next[var].clone();
        let (mut stored, clamped) = coerce(&decl.domain, raw)
            .map_err(|e| EvalError::Store { var: var.to_string(), message: e.to_string() })?;
        if clamped {
            log::debug!("clamped write to `{var}`");
            let w = Warning::Clamped { var: var.to_string() };
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
        if var == pomdp.score_id {
            stored = quantize_score(stored);
        }
        next[var] = stored;
    }
    Ok(next)
}

//! Random well-formed programs for property tests.
//!
//! Every generated program passes validation and runs without type errors:
//! bodies only read their scope, only write their targets, and expressions
//! are generated per type.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diag::Span;
use crate::expr::{BinOp, Builtin, Color, Expr, ExprKind, Place, ShapeKind, Stmt, StmtKind, UnOp};
use crate::ir::{Factor, FactorKind, FactoredPomdp, Metadata, ScopeSet, StateVariable, NOOP};
use crate::value::{Domain, Init, Value};

#[derive(Clone, Debug)]
pub struct GenConfig {
    /// Variables including the score.
    pub max_vars: usize,
    /// Largest finite domain size.
    pub max_domain: usize,
    /// Actions including NOOP.
    pub max_actions: usize,
    pub max_factors: usize,
    /// Restrict to finite domains and enumerable draws.
    pub finite: bool,
    pub include_views: bool,
    pub max_expr_depth: usize,
}

impl GenConfig {
    /// Small finite programs suitable for exact flattening.
    pub fn finite_small() -> Self {
        Self { max_vars: 4, max_domain: 3, max_actions: 3, max_factors: 6, finite: true, include_views: false, max_expr_depth: 3 }
    }

    /// Broad programs exercising every syntactic form.
    pub fn broad() -> Self {
        Self { max_vars: 6, max_domain: 5, max_actions: 4, max_factors: 8, finite: false, include_views: true, max_expr_depth: 4 }
    }
}

fn sp() -> Span {
    Span::default()
}

fn e(kind: ExprKind) -> Expr {
    Expr::new(kind, sp())
}

fn lit(v: Value) -> Expr {
    Expr::lit(v)
}

fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
    e(ExprKind::Binary(op, Box::new(a), Box::new(b)))
}

fn call(b: Builtin, args: Vec<Expr>) -> Expr {
    e(ExprKind::Call(b, args))
}

fn st(kind: StmtKind) -> Stmt {
    Stmt::new(kind, sp())
}

/// Expression type, as far as generation cares.
#[derive(Clone, Debug, PartialEq)]
enum Ty {
    Bool,
    Int,
    Real,
    Enum(Vec<String>),
    Vector(usize),
}

fn ty_of(d: &Domain) -> Ty {
    match d {
        Domain::Bool => Ty::Bool,
        Domain::Int { .. } => Ty::Int,
        Domain::Real { .. } => Ty::Real,
        Domain::Enum { labels } => Ty::Enum(labels.clone()),
        Domain::Vector { len, .. } => Ty::Vector(*len),
    }
}

struct Gen<'c> {
    rng: ChaCha8Rng,
    cfg: &'c GenConfig,
    actions: Vec<String>,
    let_counter: usize,
}

/// Generates one program from `seed`.
pub fn random_pomdp(seed: u64, cfg: &GenConfig) -> FactoredPomdp {
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(seed), cfg, actions: Vec::new(), let_counter: 0 };
    g.program()
}

impl Gen<'_> {
    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    fn small_real(&mut self) -> f64 {
        // Quarter steps keep printed literals short and exact.
        f64::from(self.rng.gen_range(-16i32..=16)) / 4.0
    }

    fn domain(&mut self) -> Domain {
        let n = self.cfg.max_domain.max(2);
        let pick = if self.cfg.finite { self.rng.gen_range(0..3) } else { self.rng.gen_range(0..5) };
        match pick {
            0 => Domain::Bool,
            1 => {
                let lo = self.rng.gen_range(-3..=3);
                let size = self.rng.gen_range(1..=n) as i64;
                Domain::Int { lo, hi: lo + size - 1 }
            }
            2 => {
                let size = self.rng.gen_range(1..=n);
                Domain::Enum { labels: (0..size).map(|i| format!("l{i}")).collect() }
            }
            3 => {
                let lo = self.small_real();
                Domain::Real { lo, hi: lo + f64::from(self.rng.gen_range(0..8)) }
            }
            _ => Domain::Vector { len: self.rng.gen_range(1..=3), lo: -2.0, hi: 2.0 },
        }
    }

    fn value_in(&mut self, d: &Domain) -> Value {
        match d {
            Domain::Bool => Value::Bool(self.chance(0.5)),
            Domain::Int { lo, hi } => Value::Int(self.rng.gen_range(*lo..=*hi)),
            Domain::Enum { labels } => Value::Sym(labels.choose(&mut self.rng).expect("non-empty").clone()),
            Domain::Real { lo, hi } => Value::Real(if self.chance(0.5) { *lo } else { *hi }),
            Domain::Vector { len, lo, .. } => Value::Vector(vec![*lo; *len]),
        }
    }

    fn init(&mut self, d: &Domain) -> Init {
        match self.rng.gen_range(0..3) {
            0 => Init::Uniform,
            1 if d.is_finite() => {
                let vals = d.values().expect("finite");
                let k = self.rng.gen_range(1..=vals.len());
                let w = 1.0 / k as f64;
                // Powers of two sum exactly; otherwise spread the remainder.
                let mut outcomes: Vec<(Value, f64)> = vals.into_iter().take(k).map(|v| (v, w)).collect();
                let total: f64 = outcomes.iter().map(|(_, w)| w).sum();
                if let Some(last) = outcomes.last_mut() {
                    last.1 += 1.0 - total;
                }
                Init::Categorical { outcomes }
            }
            _ => Init::Point { value: self.value_in(d) },
        }
    }

    fn program(&mut self) -> FactoredPomdp {
        let score_domain = if self.cfg.finite {
            Domain::Int { lo: 0, hi: self.rng.gen_range(0..self.cfg.max_domain.max(1)) as i64 }
        } else if self.chance(0.5) {
            Domain::Real { lo: -100.0, hi: 100.0 }
        } else {
            Domain::Int { lo: -50, hi: 50 }
        };
        let score_init = Init::Point { value: if self.cfg.finite { Value::Int(0) } else { self.value_in(&score_domain) } };
        let mut variables = vec![StateVariable::new("score", score_domain, score_init)];
        let extra = self.rng.gen_range(0..self.cfg.max_vars.max(1));
        for i in 0..extra {
            let d = self.domain();
            let init = self.init(&d);
            let mut v = StateVariable::new(&format!("v{i}"), d, init);
            if self.chance(0.2) {
                v.name = format!("Variable {i}");
            }
            variables.push(v);
        }
        self.actions = std::iter::once(NOOP.to_string())
            .chain((1..self.rng.gen_range(1..=self.cfg.max_actions.max(1))).map(|i| format!("A{i}")))
            .collect();

        let mut factors = Vec::new();
        let n_factors = self.rng.gen_range(0..=self.cfg.max_factors);
        let mut next_order = [0i64; 4];
        for i in 0..n_factors {
            let kinds: &[FactorKind] = if self.cfg.include_views {
                &[FactorKind::Controller, FactorKind::Model, FactorKind::Reward, FactorKind::View]
            } else {
                &[FactorKind::Controller, FactorKind::Model, FactorKind::Reward]
            };
            let kind = *kinds.choose(&mut self.rng).expect("non-empty");
            let others: Vec<&StateVariable> = variables.iter().skip(1).collect();
            let scope: Vec<&StateVariable> = variables.iter().filter(|_| self.rng.gen_bool(0.4)).collect();
            let targets: Vec<&StateVariable> = match kind {
                FactorKind::Reward => vec![&variables[0]],
                FactorKind::View => vec![],
                _ => {
                    if others.is_empty() {
                        continue;
                    }
                    let mut t: Vec<&StateVariable> = others.iter().copied().filter(|_| self.rng.gen_bool(0.4)).collect();
                    if t.is_empty() {
                        t.push(others.choose(&mut self.rng).copied().expect("non-empty"));
                    }
                    t
                }
            };
            let body = self.body(kind, &scope, &targets, 2);
            let k = kind as usize;
            factors.push(Factor {
                id: format!("{}_{i}", kind.keyword()),
                kind,
                scope: ScopeSet::new(scope.iter().map(|v| v.id.clone())),
                targets: ScopeSet::new(targets.iter().map(|v| v.id.clone())),
                body,
                order_index: next_order[k],
                span: sp(),
            });
            next_order[k] += self.rng.gen_range(1..=2);
        }
        let mut p = FactoredPomdp {
            variables,
            actions: self.actions.clone(),
            factors,
            score_id: "score".into(),
            max_steps: self.rng.gen_range(1..=50),
            metadata: if self.chance(0.5) {
                Metadata { name: "generated".into(), description: "a \"random\" program".into() }
            } else {
                Metadata::default()
            },
        };
        p.sort_factors();
        p
    }

    fn body(&mut self, kind: FactorKind, scope: &[&StateVariable], targets: &[&StateVariable], depth: usize) -> Vec<Stmt> {
        let mut out = Vec::new();
        let n = self.rng.gen_range(1..=3);
        for _ in 0..n {
            out.push(self.stmt(kind, scope, targets, depth));
        }
        out
    }

    fn stmt(&mut self, kind: FactorKind, scope: &[&StateVariable], targets: &[&StateVariable], depth: usize) -> Stmt {
        if depth > 0 && self.chance(0.3) {
            let cond = self.cond(kind, scope);
            let then_body = self.body(kind, scope, targets, depth - 1);
            let else_body = match self.rng.gen_range(0..3) {
                0 => Vec::new(),
                1 => vec![self.stmt_if(kind, scope, targets, depth - 1)],
                _ => self.body(kind, scope, targets, depth - 1),
            };
            return st(StmtKind::If { cond, then_body, else_body });
        }
        match kind {
            FactorKind::Reward => {
                let amount = self.expr(&Ty::Int, kind, scope, self.cfg.max_expr_depth.min(2));
                st(StmtKind::Increment { target: place(&targets[0].id, None), value: amount })
            }
            FactorKind::View => self.emit(scope),
            _ => {
                let t = targets.choose(&mut self.rng).copied().expect("non-empty");
                let ty = ty_of(&t.domain);
                if !self.cfg.finite && matches!(ty, Ty::Vector(_)) && self.chance(0.3) {
                    let Ty::Vector(len) = ty else { unreachable!() };
                    let idx = self.rng.gen_range(0..len);
                    let v = self.expr(&Ty::Real, kind, scope, self.cfg.max_expr_depth);
                    return st(StmtKind::Assign { target: place(&t.id, Some(idx)), value: v });
                }
                if matches!(ty, Ty::Int | Ty::Real) && self.chance(0.3) {
                    let v = self.expr(&Ty::Int, kind, scope, 2);
                    return st(StmtKind::Increment { target: place(&t.id, None), value: v });
                }
                if !self.cfg.finite && self.chance(0.15) {
                    let name = self.fresh_let();
                    let v = self.expr(&ty, kind, scope, 2);
                    // `let` followed by a use of the binding.
                    return st(StmtKind::If {
                        cond: lit(Value::Bool(true)),
                        then_body: vec![
                            st(StmtKind::Let { name: name.clone(), value: v }),
                            st(StmtKind::Assign { target: place(&t.id, None), value: e(ExprKind::Var(name)) }),
                        ],
                        else_body: vec![],
                    });
                }
                let v = self.expr(&ty, kind, scope, self.cfg.max_expr_depth);
                st(StmtKind::Assign { target: place(&t.id, None), value: v })
            }
        }
    }

    fn stmt_if(&mut self, kind: FactorKind, scope: &[&StateVariable], targets: &[&StateVariable], depth: usize) -> Stmt {
        let cond = self.cond(kind, scope);
        let then_body = self.body(kind, scope, targets, depth);
        st(StmtKind::If { cond, then_body, else_body: Vec::new() })
    }

    fn fresh_let(&mut self) -> String {
        self.let_counter += 1;
        format!("t{}", self.let_counter)
    }

    fn emit(&mut self, scope: &[&StateVariable]) -> Stmt {
        let shape = *[ShapeKind::Rect, ShapeKind::Circle, ShapeKind::Text].choose(&mut self.rng).expect("non-empty");
        let args = (0..shape.numeric_args()).map(|_| self.expr(&Ty::Int, FactorKind::View, scope, 2)).collect();
        let color = *Color::PALETTE.choose(&mut self.rng).expect("non-empty");
        let text = (shape == ShapeKind::Text).then(|| "hi \"there\"".to_string());
        st(StmtKind::Emit { shape, args, color, text })
    }

    fn cond(&mut self, kind: FactorKind, scope: &[&StateVariable]) -> Expr {
        if kind == FactorKind::Controller && self.chance(0.5) {
            let a = self.actions.choose(&mut self.rng).expect("non-empty").clone();
            let op = if self.chance(0.8) { BinOp::Eq } else { BinOp::Ne };
            return bin(op, e(ExprKind::Action), lit(Value::Sym(a)));
        }
        self.expr(&Ty::Bool, kind, scope, self.cfg.max_expr_depth)
    }

    fn vars_of<'v>(&self, scope: &[&'v StateVariable], ty: &Ty) -> Vec<&'v StateVariable> {
        scope.iter().copied().filter(|v| &ty_of(&v.domain) == ty).collect()
    }

    fn expr(&mut self, ty: &Ty, kind: FactorKind, scope: &[&StateVariable], depth: usize) -> Expr {
        let vars = self.vars_of(scope, ty);
        let leaf = depth == 0 || self.chance(0.35);
        if leaf {
            if !vars.is_empty() && self.chance(0.6) {
                return e(ExprKind::Var(vars.choose(&mut self.rng).expect("non-empty").id.clone()));
            }
            return self.literal(ty);
        }
        let d = depth - 1;
        match ty {
            Ty::Bool => match self.rng.gen_range(0..6) {
                0 => call(Builtin::Bernoulli, vec![lit(Value::Real(f64::from(self.rng.gen_range(0..=4)) / 4.0))]),
                1 => {
                    let op = *[BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge, BinOp::Eq, BinOp::Ne].choose(&mut self.rng).expect("ops");
                    bin(op, self.expr(&Ty::Int, kind, scope, d), self.expr(&Ty::Int, kind, scope, d))
                }
                2 => {
                    let op = if self.chance(0.5) { BinOp::And } else { BinOp::Or };
                    bin(op, self.expr(&Ty::Bool, kind, scope, d), self.expr(&Ty::Bool, kind, scope, d))
                }
                3 => e(ExprKind::Unary(UnOp::Not, Box::new(self.expr(&Ty::Bool, kind, scope, d)))),
                4 => {
                    let enums: Vec<&StateVariable> = scope.iter().copied().filter(|v| matches!(v.domain, Domain::Enum { .. })).collect();
                    match enums.choose(&mut self.rng) {
                        Some(v) => {
                            let Domain::Enum { labels } = &v.domain else { unreachable!() };
                            let l = labels.choose(&mut self.rng).expect("labels").clone();
                            bin(BinOp::Eq, e(ExprKind::Var(v.id.clone())), lit(Value::Sym(l)))
                        }
                        None => self.literal(ty),
                    }
                }
                _ => self.ite(ty, kind, scope, d),
            },
            Ty::Int => match self.rng.gen_range(0..8) {
                0 | 1 => {
                    let op = *[BinOp::Add, BinOp::Sub, BinOp::Mul].choose(&mut self.rng).expect("ops");
                    bin(op, self.expr(ty, kind, scope, d), self.expr(ty, kind, scope, d))
                }
                2 => {
                    let op = if self.chance(0.5) { BinOp::Div } else { BinOp::Rem };
                    bin(op, self.expr(ty, kind, scope, d), self.expr(ty, kind, scope, d))
                }
                3 => {
                    let a = self.rng.gen_range(-2..=2);
                    let b = a + self.rng.gen_range(0..=2);
                    call(Builtin::UniformInt, vec![lit(Value::Int(a)), lit(Value::Int(b))])
                }
                4 => {
                    let n = self.rng.gen_range(1..=3);
                    let ws = (0..n).map(|_| lit(Value::Int(self.rng.gen_range(1..=3)))).collect();
                    call(Builtin::Categorical, ws)
                }
                5 => {
                    let lo = self.rng.gen_range(-3..=0);
                    let hi = lo + self.rng.gen_range(0..=4);
                    call(Builtin::Clamp, vec![self.expr(ty, kind, scope, d), lit(Value::Int(lo)), lit(Value::Int(hi))])
                }
                6 => {
                    let f = *[Builtin::Abs, Builtin::Min, Builtin::Max].choose(&mut self.rng).expect("fns");
                    let args = (0..f.arity().unwrap_or(1)).map(|_| self.expr(ty, kind, scope, d)).collect();
                    call(f, args)
                }
                _ => {
                    if !self.cfg.finite && self.chance(0.5) {
                        let name = self.fresh_let();
                        let v = self.expr(ty, kind, scope, d);
                        let body = bin(BinOp::Add, e(ExprKind::Var(name.clone())), self.expr(ty, kind, scope, d));
                        e(ExprKind::Let(name, Box::new(v), Box::new(body)))
                    } else if self.chance(0.5) {
                        e(ExprKind::Unary(UnOp::Neg, Box::new(self.expr(ty, kind, scope, d))))
                    } else {
                        self.ite(ty, kind, scope, d)
                    }
                }
            },
            Ty::Real => match self.rng.gen_range(0..4) {
                0 => bin(BinOp::Add, self.expr(ty, kind, scope, d), self.expr(&Ty::Int, kind, scope, d)),
                1 => {
                    let a = self.small_real();
                    call(Builtin::UniformReal, vec![lit(Value::Real(a)), lit(Value::Real(a + 1.0))])
                }
                2 => {
                    let vecs: Vec<&StateVariable> = scope.iter().copied().filter(|v| matches!(v.domain, Domain::Vector { .. })).collect();
                    match vecs.choose(&mut self.rng) {
                        Some(v) => {
                            let Domain::Vector { len, .. } = v.domain else { unreachable!() };
                            let i = self.rng.gen_range(0..len) as i64;
                            e(ExprKind::Index(Box::new(e(ExprKind::Var(v.id.clone()))), Box::new(lit(Value::Int(i)))))
                        }
                        None => self.literal(ty),
                    }
                }
                _ => bin(BinOp::Div, self.expr(ty, kind, scope, d), self.expr(ty, kind, scope, d)),
            },
            Ty::Enum(_) => self.ite(ty, kind, scope, d),
            Ty::Vector(len) => {
                if self.chance(0.5) {
                    e(ExprKind::VecLit((0..*len).map(|_| self.expr(&Ty::Real, kind, scope, d)).collect()))
                } else {
                    bin(BinOp::Mul, self.expr(ty, kind, scope, d), lit(Value::Real(self.small_real())))
                }
            }
        }
    }

    fn ite(&mut self, ty: &Ty, kind: FactorKind, scope: &[&StateVariable], d: usize) -> Expr {
        let c = self.expr(&Ty::Bool, kind, scope, d);
        let a = self.expr(ty, kind, scope, d);
        let b = self.expr(ty, kind, scope, d);
        e(ExprKind::If(Box::new(c), Box::new(a), Box::new(b)))
    }

    fn literal(&mut self, ty: &Ty) -> Expr {
        match ty {
            Ty::Bool => lit(Value::Bool(self.chance(0.5))),
            Ty::Int => lit(Value::Int(self.rng.gen_range(-3..=3))),
            Ty::Real => lit(Value::Real(self.small_real())),
            Ty::Enum(labels) => lit(Value::Sym(labels.choose(&mut self.rng).expect("labels").clone())),
            Ty::Vector(len) => e(ExprKind::VecLit((0..*len).map(|_| lit(Value::Real(self.small_real()))).collect())),
        }
    }
}

/// What a scope mutant injects.
#[derive(Clone, Debug, PartialEq)]
pub enum MutationKind {
    /// A read of a variable outside the factor's scope.
    OutOfScopeRead,
    /// A write to a variable outside the factor's targets.
    OutOfTargetWrite,
}

#[derive(Clone, Debug)]
pub struct ScopeMutant {
    pub pomdp: FactoredPomdp,
    pub kind: MutationKind,
    pub factor: String,
    pub variable: String,
}

impl ScopeMutant {
    /// The diagnostic a validator must report for this mutant.
    pub fn expected_code(&self) -> crate::diag::DiagCode {
        match self.kind {
            MutationKind::OutOfScopeRead => crate::diag::DiagCode::ScopeViolation,
            MutationKind::OutOfTargetWrite => crate::diag::DiagCode::UnknownTarget,
        }
    }
}

/// Produces `count` single-defect mutants of a valid program. Each prepends
/// one statement to one factor body: either `let probe = v` for some `v`
/// outside the scope, or `v := <literal>` for some non-score `v` outside the
/// targets of a controller or model.
pub fn scope_mutants(p: &FactoredPomdp, count: usize, seed: u64) -> Vec<ScopeMutant> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates: Vec<(usize, MutationKind, String)> = Vec::new();
    for (fi, f) in p.factors.iter().enumerate() {
        for v in &p.variables {
            if !f.scope.contains(&v.id) {
                candidates.push((fi, MutationKind::OutOfScopeRead, v.id.clone()));
            }
            let writer = matches!(f.kind, FactorKind::Controller | FactorKind::Model);
            if writer && v.id != p.score_id && !f.targets.contains(&v.id) {
                candidates.push((fi, MutationKind::OutOfTargetWrite, v.id.clone()));
            }
        }
    }
    if candidates.is_empty() {
        return Vec::new();
    }
    (0..count)
        .map(|_| {
            let (fi, kind, var) = candidates.choose(&mut rng).expect("non-empty").clone();
            let mut m = p.clone();
            let f = &mut m.factors[fi];
            let stmt = match kind {
                MutationKind::OutOfScopeRead => st(StmtKind::Let { name: "probe".into(), value: e(ExprKind::Var(var.clone())) }),
                MutationKind::OutOfTargetWrite => {
                    let d = &p.variable(&var).expect("declared").domain;
                    let v = match d {
                        Domain::Vector { len, lo, .. } => e(ExprKind::VecLit(vec![lit(Value::Real(*lo)); *len])),
                        Domain::Real { lo, .. } => lit(Value::Real(*lo)),
                        _ => lit(d.values().expect("finite").swap_remove(0)),
                    };
                    st(StmtKind::Assign { target: place(&var, None), value: v })
                }
            };
            f.body.insert(0, stmt);
            let factor = f.id.clone();
            ScopeMutant { pomdp: m, kind, factor, variable: var }
        })
        .collect()
}

fn place(var: &str, index: Option<usize>) -> Place {
    Place { var: var.to_string(), index, span: sp() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::check;

    #[test]
    fn generated_programs_validate() {
        for seed in 0..300 {
            for cfg in [GenConfig::finite_small(), GenConfig::broad()] {
                let p = random_pomdp(seed, &cfg);
                let d = check(&p);
                assert!(d.is_empty(), "seed {seed}: {d:?}");
            }
        }
    }

    #[test]
    fn mutants_carry_exactly_their_defect() {
        let p = random_pomdp(7, &GenConfig::broad());
        for m in scope_mutants(&p, 50, 1) {
            let codes: Vec<_> = check(&m.pomdp).into_iter().map(|d| d.code).collect();
            assert_eq!(codes, vec![m.expected_code()], "{m:?}");
        }
    }
}

//! The factored-POMDP intermediate representation.
//!
//! A [`FactoredPomdp`] is a set of state variables plus scoped factors. Each
//! factor declares the variables it reads (`scope`) and writes (`targets`);
//! [`check`] proves the body respects both, which is what makes the
//! transition factor over scopes. Values are immutable: every operation
//! returns a new POMDP.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diag::{DiagCode, Diagnostic, Span};
use crate::expr::{BodyFacts, Stmt};
use crate::value::{Domain, Init, Value, SCORE_INT_LIMIT, SCORE_REAL_LIMIT};

/// Token every action set contains.
pub const NOOP: &str = "NOOP";
/// Reserved boolean variable that ends an episode when true.
pub const TERMINATED: &str = "terminated";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVariable {
    pub id: String,
    pub name: String,
    pub domain: Domain,
    pub init: Init,
    #[serde(skip)]
    pub span: Span,
}

impl StateVariable {
    /// Builds a variable whose label is its id. Literal init values are
    /// normalised to the domain's representation (`0` on a real is `0.0`).
    pub fn new(id: &str, domain: Domain, init: Init) -> Self {
        let init = normalize_init(&domain, init);
        Self { id: id.to_string(), name: id.to_string(), domain, init, span: Span::default() }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }
}

fn normalize_value(domain: &Domain, v: Value) -> Value {
    match (domain, v) {
        (Domain::Real { .. }, Value::Int(i)) => Value::Real(i as f64),
        (_, v) => v,
    }
}

pub fn normalize_init(domain: &Domain, init: Init) -> Init {
    match init {
        Init::Point { value } => Init::Point { value: normalize_value(domain, value) },
        Init::Uniform => Init::Uniform,
        Init::Categorical { outcomes } => Init::Categorical {
            outcomes: outcomes.into_iter().map(|(v, w)| (normalize_value(domain, v), w)).collect(),
        },
    }
}

/// Ordered set of variable ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScopeSet(Vec<String>);

impl ScopeSet {
    pub fn new<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self(ids.into_iter().map(Into::into).collect())
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn ids(&self) -> &[String] {
        &self.0
    }

    pub fn contains(&self, id: &str) -> bool {
        self.0.iter().any(|v| v == id)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    fn duplicates(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.0.iter().filter(|v| !seen.insert(v.as_str())).map(String::as_str).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorKind {
    Controller,
    Model,
    Reward,
    View,
}

impl FactorKind {
    pub const ALL: [FactorKind; 4] = [FactorKind::Controller, FactorKind::Model, FactorKind::Reward, FactorKind::View];

    pub fn keyword(&self) -> &'static str {
        match self {
            FactorKind::Controller => "controller",
            FactorKind::Model => "model",
            FactorKind::Reward => "reward",
            FactorKind::View => "view",
        }
    }

    pub fn from_keyword(s: &str) -> Option<FactorKind> {
        Self::ALL.into_iter().find(|k| k.keyword() == s)
    }
}

impl fmt::Display for FactorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub id: String,
    pub kind: FactorKind,
    pub scope: ScopeSet,
    pub targets: ScopeSet,
    pub body: Vec<Stmt>,
    pub order_index: i64,
    #[serde(skip)]
    pub span: Span,
}

impl Factor {
    /// Variables this factor touches: `scope ∪ targets`.
    pub fn touches(&self, id: &str) -> bool {
        self.scope.contains(id) || self.targets.contains(id)
    }

    fn sort_key(&self) -> (FactorKind, i64, &str) {
        (self.kind, self.order_index, self.id.as_str())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub name: String,
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactoredPomdp {
    pub variables: Vec<StateVariable>,
    pub actions: Vec<String>,
    /// Kept sorted in evaluation order: (kind, order_index, id).
    pub factors: Vec<Factor>,
    pub score_id: String,
    pub max_steps: u64,
    pub metadata: Metadata,
}

/// Structural edit produced by one synthesis step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub new_variables: Vec<StateVariable>,
    pub factors: Vec<FactorEdit>,
}

impl Patch {
    pub fn is_empty(&self) -> bool {
        self.new_variables.is_empty() && self.factors.is_empty()
    }
}

/// A new factor, or a replacement for the factor with the same id.
///
/// New factors go after the existing factors of their kind; replacements
/// keep their position unless the kind changes. `factor.order_index` is
/// ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorEdit {
    pub factor: Factor,
    pub replace: bool,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum IrError {
    #[error("{}", render_diags(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{0}` has no finite domain")]
    NotFinite(String),
    #[error("joint table needs {size} entries, above the cap of {cap}")]
    CapExceeded { size: u128, cap: u64 },
    #[error("factor `{factor}` cannot be enumerated: {message}")]
    Enumeration { factor: String, message: String },
}

fn render_diags(d: &[Diagnostic]) -> String {
    d.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl IrError {
    pub fn diagnostics(&self) -> &[Diagnostic] {
        match self {
            IrError::Invalid(d) => d,
            _ => &[],
        }
    }

    pub fn has_code(&self, code: DiagCode) -> bool {
        self.diagnostics().iter().any(|d| d.code == code)
    }
}

impl FactoredPomdp {
    /// The starting point of synthesis: only the score variable, no factors.
    /// Its transition is the identity and its reward is the score delta.
    pub fn initial(score: StateVariable, actions: Vec<String>, max_steps: u64, metadata: Metadata) -> Result<Self, IrError> {
        let mut actions = actions;
        if !actions.iter().any(|a| a == NOOP) {
            actions.insert(0, NOOP.to_string());
        }
        let p = FactoredPomdp {
            score_id: score.id.clone(),
            variables: vec![score],
            actions,
            factors: Vec::new(),
            max_steps,
            metadata,
        };
        p.validated()
    }

    /// Returns `self` if it satisfies every invariant.
    pub fn validated(self) -> Result<Self, IrError> {
        let diags = check(&self);
        if diags.is_empty() {
            Ok(self)
        } else {
            Err(IrError::Invalid(diags))
        }
    }

    pub fn variable(&self, id: &str) -> Option<&StateVariable> {
        self.variables.iter().find(|v| v.id == id)
    }

    pub fn factor(&self, id: &str) -> Option<&Factor> {
        self.factors.iter().find(|f| f.id == id)
    }

    pub fn score(&self) -> &StateVariable {
        self.variable(&self.score_id).expect("validated POMDP declares its score variable")
    }

    pub fn has_terminated_flag(&self) -> bool {
        self.variable(TERMINATED).is_some()
    }

    pub fn factors_of(&self, kind: FactorKind) -> impl Iterator<Item = &Factor> {
        self.factors.iter().filter(move |f| f.kind == kind)
    }

    pub fn sort_factors(&mut self) {
        self.factors.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    }

    /// Appends a variable. Existing factors are untouched.
    pub fn add_variable(&self, v: StateVariable) -> Result<Self, IrError> {
        let mut next = self.clone();
        let v = StateVariable { init: normalize_init(&v.domain, v.init.clone()), ..v };
        if self.variable(&v.id).is_some() {
            return Err(IrError::Invalid(vec![Diagnostic::error(
                DiagCode::DuplicateId,
                v.span,
                format!("variable `{}` is already declared", v.id),
            )]));
        }
        let mut diags = Vec::new();
        check_variable(&v, &mut diags);
        if !diags.is_empty() {
            return Err(IrError::Invalid(diags));
        }
        next.variables.push(v);
        next.validated()
    }

    /// Applies a patch: variables first, then factor additions/replacements,
    /// then a full invariant check of the result.
    pub fn apply_structural_edit(&self, patch: &Patch) -> Result<Self, IrError> {
        let mut next = self.clone();
        let mut diags = Vec::new();
        for v in &patch.new_variables {
            if next.variable(&v.id).is_some() {
                diags.push(Diagnostic::error(DiagCode::DuplicateId, v.span, format!("variable `{}` is already declared", v.id)));
                continue;
            }
            next.variables.push(StateVariable { init: normalize_init(&v.domain, v.init.clone()), ..v.clone() });
        }
        for edit in &patch.factors {
            let mut f = edit.factor.clone();
            let existing = next.factors.iter().position(|g| g.id == f.id);
            match (existing, edit.replace) {
                (Some(i), true) => {
                    let old = &next.factors[i];
                    f.order_index = if old.kind == f.kind { old.order_index } else { next_order(&next, f.kind) };
                    next.factors[i] = f;
                }
                (None, true) => diags.push(
                    Diagnostic::error(DiagCode::UnknownFactor, f.span, format!("no factor `{}` to replace", f.id))
                        .in_factor(&f.id),
                ),
                (Some(_), false) => diags.push(
                    Diagnostic::error(DiagCode::DuplicateId, f.span, format!("factor `{}` already exists", f.id))
                        .in_factor(&f.id),
                ),
                (None, false) => {
                    f.order_index = next_order(&next, f.kind);
                    next.factors.push(f);
                }
            }
        }
        if !diags.is_empty() {
            return Err(IrError::Invalid(diags));
        }
        next.sort_factors();
        next.validated()
    }

    /// Factors whose `scope ∪ targets` meets `z`, in evaluation order.
    pub fn scope_overlap_query(&self, z: &ScopeSet) -> Result<Vec<&Factor>, IrError> {
        if let Some(unknown) = z.iter().find(|id| self.variable(id).is_none()) {
            return Err(IrError::UnknownVariable(unknown.to_string()));
        }
        Ok(self.factors.iter().filter(|f| z.iter().any(|id| f.touches(id))).collect())
    }
}

fn next_order(p: &FactoredPomdp, kind: FactorKind) -> i64 {
    p.factors_of(kind).map(|f| f.order_index + 1).max().unwrap_or(0)
}

fn check_variable(v: &StateVariable, diags: &mut Vec<Diagnostic>) {
    if let Err(msg) = v.domain.check() {
        diags.push(Diagnostic::error(DiagCode::InvalidDomain, v.span, format!("variable `{}`: {msg}", v.id)));
        return;
    }
    match &v.init {
        Init::Point { value } => {
            if !v.domain.contains(value) {
                diags.push(Diagnostic::error(
                    DiagCode::InitOutOfDomain,
                    v.span,
                    format!("variable `{}`: initial value {value} is outside {}", v.id, v.domain),
                ));
            }
        }
        Init::Uniform => {}
        Init::Categorical { outcomes } => {
            let bad_weight = outcomes.iter().any(|(_, w)| !w.is_finite() || *w < 0.0);
            let total: f64 = outcomes.iter().map(|(_, w)| w).sum();
            if outcomes.is_empty() || bad_weight || (total - 1.0).abs() > 1e-9 {
                diags.push(Diagnostic::error(
                    DiagCode::NonNormalizedInit,
                    v.span,
                    format!("variable `{}`: categorical weights must be non-negative and sum to 1 (sum is {total})", v.id),
                ));
            }
            for (value, _) in outcomes {
                if !v.domain.contains(value) {
                    diags.push(Diagnostic::error(
                        DiagCode::InitOutOfDomain,
                        v.span,
                        format!("variable `{}`: categorical outcome {value} is outside {}", v.id, v.domain),
                    ));
                }
            }
        }
    }
    if v.id == TERMINATED && v.domain != Domain::Bool {
        diags.push(Diagnostic::error(DiagCode::ReservedName, v.span, "`terminated` is reserved for a bool variable"));
    }
}

/// Every invariant violation of `p`, in a stable order.
pub fn check(p: &FactoredPomdp) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut declared: BTreeMap<&str, &StateVariable> = BTreeMap::new();
    for v in &p.variables {
        if declared.insert(v.id.as_str(), v).is_some() {
            diags.push(Diagnostic::error(DiagCode::DuplicateId, v.span, format!("variable `{}` is declared twice", v.id)));
        }
        check_variable(v, &mut diags);
    }

    let mut seen_actions = BTreeSet::new();
    for a in &p.actions {
        if !seen_actions.insert(a.as_str()) {
            diags.push(Diagnostic::error(DiagCode::DuplicateId, Span::default(), format!("action `{a}` is listed twice")));
        }
    }
    if !seen_actions.contains(NOOP) {
        diags.push(Diagnostic::error(DiagCode::MissingNoop, Span::default(), "the action set must contain NOOP"));
    }

    match declared.get(p.score_id.as_str()) {
        None => diags.push(Diagnostic::error(
            DiagCode::UndeclaredVariable,
            Span::default(),
            format!("score variable `{}` is not declared", p.score_id),
        )),
        Some(v) => match v.domain {
            Domain::Int { lo, hi } if lo.abs() <= SCORE_INT_LIMIT && hi.abs() <= SCORE_INT_LIMIT => {}
            Domain::Real { lo, hi } if lo.abs() <= SCORE_REAL_LIMIT && hi.abs() <= SCORE_REAL_LIMIT => {}
            _ => diags.push(Diagnostic::error(
                DiagCode::InvalidScore,
                v.span,
                format!("score `{}` must be a bounded int or real within ±2^36 (real) / ±2^52 (int)", v.id),
            )),
        },
    }

    if p.max_steps == 0 {
        diags.push(Diagnostic::error(DiagCode::InvalidMaxSteps, Span::default(), "max_steps must be positive"));
    }

    let mut factor_ids = BTreeSet::new();
    for f in &p.factors {
        if !factor_ids.insert(f.id.as_str()) {
            diags.push(
                Diagnostic::error(DiagCode::DuplicateId, f.span, format!("factor `{}` is declared twice", f.id)).in_factor(&f.id),
            );
        }
        check_factor(p, f, &declared, &mut diags);
    }
    diags
}

fn check_factor(p: &FactoredPomdp, f: &Factor, declared: &BTreeMap<&str, &StateVariable>, diags: &mut Vec<Diagnostic>) {
    let err = |code: DiagCode, span: Span, msg: String| Diagnostic::error(code, span, msg).in_factor(&f.id);
    for (list, label) in [(&f.scope, "reads"), (&f.targets, "writes")] {
        for dup in list.duplicates() {
            diags.push(err(DiagCode::DuplicateId, f.span, format!("factor `{}` lists `{dup}` twice in {label}", f.id)));
        }
        for id in list.iter() {
            if !declared.contains_key(id) {
                diags.push(err(
                    DiagCode::UndeclaredVariable,
                    f.span,
                    format!("factor `{}` declares undeclared variable `{id}` in {label}", f.id),
                ));
            }
        }
    }

    if f.kind == FactorKind::View && !f.targets.is_empty() {
        diags.push(err(DiagCode::ViewWritesState, f.span, format!("view `{}` must not declare write targets", f.id)));
    }
    if f.kind == FactorKind::Reward {
        for t in f.targets.iter().filter(|t| *t != p.score_id) {
            diags.push(err(
                DiagCode::InvalidRewardWrite,
                f.span,
                format!("reward `{}` may only target the score `{}`, not `{t}`", f.id, p.score_id),
            ));
        }
    } else if f.kind != FactorKind::View && f.targets.contains(&p.score_id) {
        diags.push(err(
            DiagCode::ScoreWriteOutsideReward,
            f.span,
            format!("{} `{}` targets the score; only reward factors may change it", f.kind, f.id),
        ));
    }

    let facts = BodyFacts::of(&f.body);
    for (var, span) in &facts.reads {
        if !declared.contains_key(var.as_str()) {
            diags.push(err(DiagCode::UndeclaredVariable, *span, format!("factor `{}` reads undeclared variable `{var}`", f.id)));
        } else if !f.scope.contains(var) {
            diags.push(err(
                DiagCode::ScopeViolation,
                *span,
                format!("factor `{}` reads `{var}`, which is not in its declared scope", f.id),
            ));
        }
    }
    for (place, inc) in &facts.writes {
        let var = place.var.as_str();
        if f.kind == FactorKind::View {
            diags.push(err(DiagCode::ViewWritesState, place.span, format!("view `{}` writes `{var}`", f.id)));
            continue;
        }
        let Some(decl) = declared.get(var) else {
            diags.push(err(DiagCode::UndeclaredVariable, place.span, format!("factor `{}` writes undeclared variable `{var}`", f.id)));
            continue;
        };
        if !f.targets.contains(var) {
            diags.push(err(
                DiagCode::UnknownTarget,
                place.span,
                format!("factor `{}` writes `{var}`, which is not among its declared targets", f.id),
            ));
        }
        if f.kind == FactorKind::Reward && (var != p.score_id || !inc) {
            diags.push(err(
                DiagCode::InvalidRewardWrite,
                place.span,
                format!("reward `{}` may only increment the score `{}` (`{var}` {})", f.id, p.score_id, if *inc { "+=" } else { ":=" }),
            ));
        }
        if let Some(i) = place.index {
            match decl.domain {
                Domain::Vector { len, .. } if i < len => {}
                _ => diags.push(err(
                    DiagCode::InvalidIndex,
                    place.span,
                    format!("factor `{}` writes `{var}[{i}]`, but `{var}` is not a vector with that component", f.id),
                )),
            }
        }
    }
    if f.kind != FactorKind::Controller {
        for span in &facts.action_reads {
            diags.push(err(
                DiagCode::ActionOutsideController,
                *span,
                format!("{} `{}` reads the action; only controllers may depend on it", f.kind, f.id),
            ));
        }
    }
    for (sym, span) in &facts.action_symbols {
        if !p.actions.iter().any(|a| a == sym) {
            diags.push(err(DiagCode::UnknownAction, *span, format!("factor `{}` compares the action with unknown token `{sym}`", f.id)));
        }
    }
    if f.kind != FactorKind::View {
        for span in &facts.emits {
            diags.push(err(DiagCode::EmitOutsideView, *span, format!("{} `{}` draws a shape; only views may", f.kind, f.id)));
        }
    }
}

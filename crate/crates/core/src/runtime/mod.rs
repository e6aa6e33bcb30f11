//! Executes a factored POMDP one step at a time.
//!
//! A step runs four phases in order: controllers (which see the action),
//! models, rewards and views. Within a phase every factor reads the
//! phase-start state; their writes are merged in evaluation order and then
//! coerced into each variable's domain. Views only draw.

mod play;
mod render;
mod trace;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use play::{default_key_map, Key, KeyMap};
pub use render::{render_ansi, Raster, RenderConfig, RASTER_SIZE};
pub use trace::{run_episode, Trace, TraceStep};

use crate::eval::{apply_effects, exec_body, EvalError, Shape, StateMap, Warning};
use crate::ir::{FactorKind, FactoredPomdp, TERMINATED};
use crate::rng::{enumerate_outcomes, ChoicePath, Chooser, EpisodeRng, RandomSource};
use crate::value::{coerce, quantize_score, Domain, Init, Value};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub values: StateMap,
    pub step_count: u64,
    pub terminated: bool,
}

impl SimState {
    pub fn get(&self, var: &str) -> Option<&Value> {
        self.values.get(var)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub shapes: Vec<Shape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raster: Option<Raster>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub state: SimState,
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub warnings: Vec<Warning>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum RuntimeError {
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("the episode is over; reset before stepping again")]
    SteppedAfterDone,
    #[error("cannot initialise `{var}`: {message}")]
    Init { var: String, message: String },
    #[error("factor `{factor}` failed: {error}")]
    Factor { factor: String, error: EvalError },
    #[error("{phase} phase failed: {error}")]
    Phase { phase: FactorKind, error: EvalError },
}

impl RuntimeError {
    fn factor(id: &str, error: EvalError) -> Self {
        RuntimeError::Factor { factor: id.to_string(), error }
    }
}

/// Stream purpose for a factor body's draws.
fn factor_purpose(id: &str) -> String {
    format!("factor:{id}")
}

fn init_purpose(id: &str) -> String {
    format!("init:{id}")
}

fn sample_init(domain: &Domain, init: &Init, c: &mut dyn Chooser) -> Result<Value, EvalError> {
    Ok(match init {
        Init::Point { value } => value.clone(),
        Init::Categorical { outcomes } => {
            let weights: Vec<f64> = outcomes.iter().map(|(_, w)| *w).collect();
            outcomes[c.categorical(&weights)?].0.clone()
        }
        Init::Uniform => match domain {
            Domain::Bool => Value::Bool(c.bernoulli(0.5)?),
            Domain::Int { lo, hi } => Value::Int(c.uniform_int(*lo, *hi)?),
            Domain::Real { lo, hi } => Value::Real(c.uniform_real(*lo, *hi)?),
            Domain::Enum { labels } => Value::Sym(labels[c.categorical(&vec![1.0; labels.len()])?].clone()),
            Domain::Vector { len, lo, hi } => {
                Value::Vector((0..*len).map(|_| c.uniform_real(*lo, *hi)).collect::<Result<_, _>>()?)
            }
        },
    })
}

fn is_terminated(p: &FactoredPomdp, values: &StateMap) -> bool {
    p.has_terminated_flag() && values.get(TERMINATED) == Some(&Value::Bool(true))
}

/// Samples the initial state and its observation.
pub fn reset(p: &FactoredPomdp, rng: &mut dyn RandomSource, render: &RenderConfig) -> Result<(SimState, Observation), RuntimeError> {
    let mut values = StateMap::new();
    for v in &p.variables {
        let err = |message: String| RuntimeError::Init { var: v.id.clone(), message };
        let raw = sample_init(&v.domain, &v.init, rng.stream(&init_purpose(&v.id), 0)).map_err(|e| err(e.to_string()))?;
        let (mut stored, _) = coerce(&v.domain, raw).map_err(|e| err(e.to_string()))?;
        if v.id == p.score_id {
            stored = quantize_score(stored);
        }
        values.insert(v.id.clone(), stored);
    }
    let terminated = is_terminated(p, &values);
    let state = SimState { values, step_count: 0, terminated };
    let mut warnings = Vec::new();
    let observation = observe(p, &state, rng, render, &mut warnings)?;
    Ok((state, observation))
}

pub fn is_done(p: &FactoredPomdp, state: &SimState) -> bool {
    state.terminated || state.step_count >= p.max_steps
}

/// Runs the controller, model and reward phases. Returns the next values.
fn transition(
    p: &FactoredPomdp,
    state: &SimState,
    action: &str,
    rng: &mut dyn RandomSource,
    warnings: &mut Vec<Warning>,
) -> Result<StateMap, RuntimeError> {
    let mut values = state.values.clone();
    for kind in [FactorKind::Controller, FactorKind::Model, FactorKind::Reward] {
        let mut effects = Vec::new();
        for f in p.factors_of(kind) {
            let act = (kind == FactorKind::Controller).then_some(action);
            let out = exec_body(&f.body, &values, act, rng.stream(&factor_purpose(&f.id), state.step_count))
                .map_err(|e| RuntimeError::factor(&f.id, e))?;
            effects.extend(out.effects);
            merge_warnings(warnings, out.warnings);
        }
        if !effects.is_empty() {
            values = apply_effects(p, &values, &effects, warnings).map_err(|error| RuntimeError::Phase { phase: kind, error })?;
        }
    }
    Ok(values)
}

fn merge_warnings(into: &mut Vec<Warning>, from: Vec<Warning>) {
    for w in from {
        if !into.contains(&w) {
            into.push(w);
        }
    }
}

fn observe(
    p: &FactoredPomdp,
    state: &SimState,
    rng: &mut dyn RandomSource,
    render: &RenderConfig,
    warnings: &mut Vec<Warning>,
) -> Result<Observation, RuntimeError> {
    let mut shapes = Vec::new();
    for f in p.factors_of(FactorKind::View) {
        let out = exec_body(&f.body, &state.values, None, rng.stream(&factor_purpose(&f.id), state.step_count))
            .map_err(|e| RuntimeError::factor(&f.id, e))?;
        shapes.extend(out.shapes);
        merge_warnings(warnings, out.warnings);
    }
    let raster = render.raster.then(|| Raster::paint(render.width, render.height, &shapes));
    Ok(Observation { shapes, raster })
}

fn check_action(p: &FactoredPomdp, state: &SimState, action: &str) -> Result<(), RuntimeError> {
    if is_done(p, state) {
        return Err(RuntimeError::SteppedAfterDone);
    }
    if !p.actions.iter().any(|a| a == action) {
        return Err(RuntimeError::UnknownAction(action.to_string()));
    }
    Ok(())
}

fn score_of(p: &FactoredPomdp, values: &StateMap) -> f64 {
    values.get(&p.score_id).and_then(Value::as_f64).unwrap_or(0.0)
}

fn finish(p: &FactoredPomdp, state: &SimState, values: StateMap) -> SimState {
    let terminated = is_terminated(p, &values);
    SimState { values, step_count: state.step_count + 1, terminated }
}

/// Advances `state` by one step under `action`.
pub fn step(
    p: &FactoredPomdp,
    state: &SimState,
    action: &str,
    rng: &mut dyn RandomSource,
    render: &RenderConfig,
) -> Result<StepResult, RuntimeError> {
    check_action(p, state, action)?;
    let mut warnings = Vec::new();
    let values = transition(p, state, action, rng, &mut warnings)?;
    let reward = score_of(p, &values) - score_of(p, &state.values);
    let next = finish(p, state, values);
    let observation = observe(p, &next, rng, render, &mut warnings)?;
    let done = is_done(p, &next);
    Ok(StepResult { state: next, observation, reward, done, warnings })
}

/// The exact next-state distribution of one step, obtained by enumerating
/// every sequence of random draws. Fails if a body draws a continuous value.
pub fn step_distribution(p: &FactoredPomdp, state: &SimState, action: &str) -> Result<Vec<(SimState, f64)>, RuntimeError> {
    check_action(p, state, action)?;
    let outcomes = enumerate_outcomes(|path: &mut ChoicePath| {
        let mut warnings = Vec::new();
        transition(p, state, action, path, &mut warnings)
    })?;
    let mut merged: BTreeMap<String, (SimState, f64)> = BTreeMap::new();
    for (values, prob) in outcomes {
        let next = finish(p, state, values);
        let key = serde_json::to_string(&next.values).expect("state values serialise");
        merged.entry(key).or_insert_with(|| (next, 0.0)).1 += prob;
    }
    Ok(merged.into_values().collect())
}

/// A running episode: the program, its random streams and the current state.
pub struct Episode<'p> {
    pomdp: &'p FactoredPomdp,
    rng: EpisodeRng,
    render: RenderConfig,
    state: SimState,
    observation: Observation,
}

impl<'p> Episode<'p> {
    pub fn new(pomdp: &'p FactoredPomdp, seed: u64, render: RenderConfig) -> Result<Self, RuntimeError> {
        let mut rng = EpisodeRng::new(seed);
        let (state, observation) = reset(pomdp, &mut rng, &render)?;
        Ok(Self { pomdp, rng, render, state, observation })
    }

    pub fn pomdp(&self) -> &FactoredPomdp {
        self.pomdp
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn observation(&self) -> &Observation {
        &self.observation
    }

    pub fn done(&self) -> bool {
        is_done(self.pomdp, &self.state)
    }

    /// Overwrites one variable in the current state, coercing it into its
    /// domain, and re-renders the observation.
    pub fn set(&mut self, var: &str, value: Value) -> Result<(), RuntimeError> {
        let decl = self
            .pomdp
            .variable(var)
            .ok_or_else(|| RuntimeError::Init { var: var.to_string(), message: "no such variable".into() })?;
        let (stored, _) = coerce(&decl.domain, value).map_err(|e| RuntimeError::Init { var: var.to_string(), message: e.to_string() })?;
        self.state.values.insert(var.to_string(), stored);
        self.state.terminated = is_terminated(self.pomdp, &self.state.values);
        self.observation = observe(self.pomdp, &self.state, &mut self.rng, &self.render, &mut Vec::new())?;
        Ok(())
    }

    pub fn step(&mut self, action: &str) -> Result<StepResult, RuntimeError> {
        let r = step(self.pomdp, &self.state, action, &mut self.rng, &self.render)?;
        self.state = r.state.clone();
        self.observation = r.observation.clone();
        Ok(r)
    }
}

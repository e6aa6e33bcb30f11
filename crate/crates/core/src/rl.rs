//! Tabular Q-learning over discretised state observations, environment
//! filtering, and zero-shot evaluation normalised between a random policy
//! (0) and a policy trained on the reference program (1).

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ir::FactoredPomdp;
use crate::rng::derive_seed;
use crate::runtime::{Episode, RenderConfig, RuntimeError, SimState};
use crate::value::{Domain, Value};

pub const DEFAULT_BINS: u16 = 8;

/// Bin index used for a variable the acting program does not have.
pub const MISSING: u16 = u16::MAX;

#[derive(Debug, thiserror::Error)]
pub enum RlError {
    #[error("no programs to train on")]
    NoPrograms,
    #[error("program {index} has actions {found:?}, expected {expected:?}")]
    IncompatibleActionSets { index: usize, expected: Vec<String>, found: Vec<String> },
    #[error("the reference-trained mean {reference} does not exceed the random mean {random}")]
    DegenerateNormalization { random: f64, reference: f64 },
    #[error("policy actions {policy:?} do not match program actions {program:?}")]
    ActionMismatch { policy: Vec<String>, program: Vec<String> },
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

/// Bins one variable's value. Booleans, enums and integer domains of at most
/// `bins` values pass through; larger numeric domains are cut into `bins`
/// equal-width bins. Vectors bin each component.
pub fn discretize_value(domain: &Domain, v: &Value, bins: u16, out: &mut Vec<u16>) {
    let b = f64::from(bins);
    let cut = |x: f64, lo: f64, hi: f64| -> u16 {
        if hi <= lo {
            return 0;
        }
        (((x - lo) / (hi - lo) * b).floor()).clamp(0.0, b - 1.0) as u16
    };
    match (domain, v) {
        (Domain::Bool, Value::Bool(x)) => out.push(u16::from(*x)),
        (Domain::Enum { labels }, Value::Sym(s)) => out.push(labels.iter().position(|l| l == s).unwrap_or(0) as u16),
        (Domain::Int { lo, hi }, Value::Int(x)) => {
            let size = (*hi - *lo) as u64 + 1;
            if size <= u64::from(bins) {
                out.push((*x - *lo) as u16);
            } else {
                out.push(cut(*x as f64, *lo as f64, *hi as f64 + 1.0));
            }
        }
        (Domain::Real { lo, hi }, v) => out.push(cut(v.as_f64().unwrap_or(*lo), *lo, *hi)),
        (Domain::Vector { len, lo, hi }, Value::Vector(xs)) => {
            for i in 0..*len {
                out.push(cut(xs.get(i).copied().unwrap_or(*lo), *lo, *hi));
            }
        }
        _ => out.push(0),
    }
}

/// The observation of a state: every named variable binned in the given
/// order. The score is never part of it.
pub fn observe(p: &FactoredPomdp, observed: &[String], state: &SimState, bins: u16) -> Vec<u16> {
    let mut out = Vec::with_capacity(observed.len());
    for id in observed {
        match (p.variable(id), state.get(id)) {
            (Some(decl), Some(v)) => discretize_value(&decl.domain, v, bins, &mut out),
            _ => out.push(MISSING),
        }
    }
    out
}

/// Observed variables of a program: all but the score, sorted by id.
pub fn observed_variables(p: &FactoredPomdp) -> Vec<String> {
    let mut ids: Vec<String> = p.variables.iter().filter(|v| v.id != p.score_id).map(|v| v.id.clone()).collect();
    ids.sort();
    ids
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of training over which ε is annealed linearly.
    pub anneal_fraction: f64,
    pub total_steps: u64,
    pub bins: u16,
    pub q_init: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            anneal_fraction: 0.5,
            total_steps: 200_000,
            bins: DEFAULT_BINS,
            q_init: 0.0,
        }
    }
}

impl Hyperparams {
    pub fn epsilon(&self, step: u64) -> f64 {
        let horizon = self.anneal_fraction * self.total_steps as f64;
        let t = step as f64 / horizon;
        if horizon <= 0.0 || t >= 1.0 {
            return self.epsilon_end;
        }
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * t
    }
}

/// A tabular action-value function.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub actions: Vec<String>,
    pub observed: Vec<String>,
    pub bins: u16,
    pub q_init: f64,
    pub q: HashMap<Vec<u16>, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    actions: Vec<String>,
    observed: Vec<String>,
    bins: u16,
    q_init: f64,
    entries: Vec<QEntry>,
}

#[derive(Serialize, Deserialize)]
struct QEntry {
    obs: Vec<u16>,
    values: Vec<f64>,
}

impl Policy {
    pub fn new(actions: Vec<String>, observed: Vec<String>, bins: u16, q_init: f64) -> Self {
        Self { actions, observed, bins, q_init, q: HashMap::new() }
    }

    pub fn values(&self, obs: &[u16]) -> Vec<f64> {
        self.q.get(obs).cloned().unwrap_or_else(|| vec![self.q_init; self.actions.len()])
    }

    /// Fails unless `p` has exactly this policy's action tokens.
    pub fn check_program(&self, p: &FactoredPomdp) -> Result<(), RlError> {
        if p.actions == self.actions {
            Ok(())
        } else {
            Err(RlError::ActionMismatch { policy: self.actions.clone(), program: p.actions.clone() })
        }
    }

    /// Greedy action index; ties go to the earliest action.
    pub fn greedy(&self, obs: &[u16]) -> usize {
        argmax(&self.values(obs))
    }

    pub fn to_json(&self) -> String {
        let mut entries: Vec<QEntry> = self.q.iter().map(|(k, v)| QEntry { obs: k.clone(), values: v.clone() }).collect();
        entries.sort_by(|a, b| a.obs.cmp(&b.obs));
        let file = PolicyFile { actions: self.actions.clone(), observed: self.observed.clone(), bins: self.bins, q_init: self.q_init, entries };
        serde_json::to_string(&file).expect("policies serialise")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        let f: PolicyFile = serde_json::from_str(s)?;
        Ok(Self { actions: f.actions, observed: f.observed, bins: f.bins, q_init: f.q_init, q: f.entries.into_iter().map(|e| (e.obs, e.values)).collect() })
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Per-episode record of a training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// (global step at episode end, program index, episode return)
    pub episodes: Vec<(u64, usize, f64)>,
}

impl TrainLog {
    /// `step,mean_return` rows, the mean taken over the trailing `window`
    /// episodes.
    pub fn to_csv(&self, window: usize) -> String {
        let mut out = String::from("step,mean_return\n");
        let w = window.max(1);
        for i in 0..self.episodes.len() {
            let lo = (i + 1).saturating_sub(w);
            let slice = &self.episodes[lo..=i];
            let mean = slice.iter().map(|e| e.2).sum::<f64>() / slice.len() as f64;
            let _ = writeln!(out, "{},{mean}", self.episodes[i].0);
        }
        out
    }
}

fn check_actions(programs: &[&FactoredPomdp]) -> Result<Vec<String>, RlError> {
    let first = programs.first().ok_or(RlError::NoPrograms)?;
    for (index, p) in programs.iter().enumerate().skip(1) {
        if p.actions != first.actions {
            return Err(RlError::IncompatibleActionSets { index, expected: first.actions.clone(), found: p.actions.clone() });
        }
    }
    Ok(first.actions.clone())
}

/// Q-learning across `programs`, one episode per program in turn. Episodes
/// that hit `max_steps` bootstrap from the last state; terminated episodes
/// do not. Deterministic given `seed`.
pub fn train(programs: &[&FactoredPomdp], hp: &Hyperparams, seed: u64) -> Result<(Policy, TrainLog), RlError> {
    let actions = check_actions(programs)?;
    let observed = observed_variables(programs[0]);
    let mut policy = Policy::new(actions, observed, hp.bins, hp.q_init);
    let mut log = TrainLog::default();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "train:explore", 0));
    let n_actions = policy.actions.len();
    let mut step = 0u64;
    let mut episode = 0u64;
    while step < hp.total_steps {
        let which = (episode % programs.len() as u64) as usize;
        let p = programs[which];
        let mut ep = Episode::new(p, derive_seed(seed, "train:episode", episode), RenderConfig::shapes_only())?;
        let mut obs = observe(p, &policy.observed, ep.state(), policy.bins);
        let mut ret = 0.0;
        while !ep.done() && step < hp.total_steps {
            let a = if rng.gen::<f64>() < hp.epsilon(step) { rng.gen_range(0..n_actions) } else { policy.greedy(&obs) };
            let r = ep.step(&policy.actions[a])?;
            let next = observe(p, &policy.observed, &r.state, policy.bins);
            let bootstrap = if r.state.terminated { 0.0 } else { hp.gamma * policy.values(&next).iter().copied().fold(f64::NEG_INFINITY, f64::max) };
            let q_init = policy.q_init;
            let row = policy.q.entry(obs).or_insert_with(|| vec![q_init; n_actions]);
            row[a] += hp.alpha * (r.reward + bootstrap - row[a]);
            ret += r.reward;
            obs = next;
            step += 1;
        }
        log.episodes.push((step, which, ret));
        episode += 1;
    }
    Ok((policy, log))
}

/// Anything that picks an action for a state.
pub trait Agent {
    fn act(&mut self, p: &FactoredPomdp, state: &SimState, episode_seed: u64, t: u64) -> usize;
}

impl Agent for Policy {
    fn act(&mut self, p: &FactoredPomdp, state: &SimState, _episode_seed: u64, _t: u64) -> usize {
        self.greedy(&observe(p, &self.observed, state, self.bins))
    }
}

/// Uniform over actions, drawn from its own stream so that evaluations are
/// reproducible.
#[derive(Clone, Debug)]
pub struct RandomAgent {
    pub actions: usize,
    /// Separates independent random policies on the same seeds.
    pub stream: String,
}

impl Agent for RandomAgent {
    fn act(&mut self, _p: &FactoredPomdp, _state: &SimState, episode_seed: u64, t: u64) -> usize {
        (derive_seed(episode_seed, &self.stream, t) % self.actions as u64) as usize
    }
}

/// Evaluation protocol: `episodes` episodes per seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub seeds: Vec<u64>,
    pub episodes: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { seeds: vec![0, 1, 2], episodes: 50 }
    }
}

impl EvalConfig {
    fn episode_seeds(&self) -> Vec<u64> {
        self.seeds.iter().flat_map(|s| (0..self.episodes).map(move |i| derive_seed(*s, "eval:episode", i))).collect()
    }
}

/// Returns of `agent` on each evaluation episode.
pub fn rollout_returns(p: &FactoredPomdp, agent: &mut dyn Agent, cfg: &EvalConfig) -> Result<Vec<f64>, RlError> {
    let mut out = Vec::new();
    for es in cfg.episode_seeds() {
        let mut ep = Episode::new(p, es, RenderConfig::shapes_only())?;
        let mut total = 0.0;
        let mut t = 0;
        while !ep.done() {
            let a = agent.act(p, ep.state(), es, t);
            total += ep.step(&p.actions[a])?.reward;
            t += 1;
        }
        out.push(total);
    }
    Ok(out)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Standard error of the mean (sample standard deviation / √n).
pub fn std_error(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (var / xs.len() as f64).sqrt()
}

/// The two normalisation endpoints, measured on the evaluation episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub random_mean: f64,
    pub random_std_error: f64,
    pub reference_mean: f64,
    pub reference_std_error: f64,
}

/// Measures the random endpoint and trains plus measures the reference
/// endpoint. Returns the reference-trained policy too.
pub fn baselines(reference: &FactoredPomdp, hp: &Hyperparams, train_seed: u64, cfg: &EvalConfig) -> Result<(Baselines, Policy), RlError> {
    let mut random = RandomAgent { actions: reference.actions.len(), stream: "baseline:random".into() };
    let random_returns = rollout_returns(reference, &mut random, cfg)?;
    let (mut policy, _) = train(&[reference], hp, train_seed)?;
    let reference_returns = rollout_returns(reference, &mut policy, cfg)?;
    Ok((
        Baselines {
            random_mean: mean(&random_returns),
            random_std_error: std_error(&random_returns),
            reference_mean: mean(&reference_returns),
            reference_std_error: std_error(&reference_returns),
        },
        policy,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub raw_mean: f64,
    pub raw_std_error: f64,
    pub normalized: f64,
    /// Standard error of the normalised score.
    pub normalized_std_error: f64,
    pub baselines: Baselines,
    pub episodes: usize,
    pub seeds: Vec<u64>,
}

impl TransferReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialise")
    }

    pub fn to_table(&self) -> String {
        let b = &self.baselines;
        format!(
            "raw mean return     {:>10.4} ± {:.4}\nrandom baseline     {:>10.4} ± {:.4}\nreference baseline  {:>10.4} ± {:.4}\nnormalized score    {:>10.4} ± {:.4}\nepisodes {} over seeds {:?}\n",
            self.raw_mean,
            self.raw_std_error,
            b.random_mean,
            b.random_std_error,
            b.reference_mean,
            b.reference_std_error,
            self.normalized,
            self.normalized_std_error,
            self.episodes,
            self.seeds
        )
    }
}

/// Greedy evaluation of `agent` on the reference program, normalised so that
/// the random endpoint is 0 and the reference-trained endpoint is 1.
pub fn evaluate_zero_shot(agent: &mut dyn Agent, reference: &FactoredPomdp, cfg: &EvalConfig, b: &Baselines) -> Result<TransferReport, RlError> {
    let span = b.reference_mean - b.random_mean;
    if span <= 0.0 {
        return Err(RlError::DegenerateNormalization { random: b.random_mean, reference: b.reference_mean });
    }
    let returns = rollout_returns(reference, agent, cfg)?;
    let normalized: Vec<f64> = returns.iter().map(|r| (r - b.random_mean) / span).collect();
    Ok(TransferReport {
        raw_mean: mean(&returns),
        raw_std_error: std_error(&returns),
        normalized: mean(&normalized),
        normalized_std_error: std_error(&normalized),
        baselines: b.clone(),
        episodes: returns.len(),
        seeds: cfg.seeds.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: Vec<usize>,
    /// Program index and the error that rejected it.
    pub rejected: Vec<(usize, String)>,
}

/// Keeps programs on which a random policy runs `steps` steps for every seed
/// without a runtime error, resetting whenever an episode ends.
pub fn filter_envs(programs: &[&FactoredPomdp], seeds: &[u64], steps: u64) -> FilterReport {
    let mut report = FilterReport { kept: Vec::new(), rejected: Vec::new() };
    'programs: for (i, p) in programs.iter().enumerate() {
        for seed in seeds {
            if let Err(e) = random_run(p, *seed, steps) {
                report.rejected.push((i, e.to_string()));
                continue 'programs;
            }
        }
        report.kept.push(i);
    }
    report
}

fn random_run(p: &FactoredPomdp, seed: u64, steps: u64) -> Result<(), RuntimeError> {
    let mut episode = 0;
    let mut ep = Episode::new(p, derive_seed(seed, "filter:episode", episode), RenderConfig::shapes_only())?;
    for t in 0..steps {
        if ep.done() {
            episode += 1;
            ep = Episode::new(p, derive_seed(seed, "filter:episode", episode), RenderConfig::shapes_only())?;
        }
        let a = (derive_seed(seed, "filter:action", t) % p.actions.len() as u64) as usize;
        ep.step(&p.actions[a])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::load;

    #[test]
    fn binning() {
        let mut out = Vec::new();
        discretize_value(&Domain::Int { lo: 0, hi: 63 }, &Value::Int(63), 8, &mut out);
        discretize_value(&Domain::Int { lo: 0, hi: 63 }, &Value::Int(8), 8, &mut out);
        discretize_value(&Domain::Int { lo: -1, hi: 1 }, &Value::Int(1), 8, &mut out);
        discretize_value(&Domain::Real { lo: 0.0, hi: 1.0 }, &Value::Real(1.0), 8, &mut out);
        discretize_value(&Domain::Real { lo: 0.0, hi: 1.0 }, &Value::Real(0.49), 8, &mut out);
        discretize_value(&Domain::Vector { len: 2, lo: 0.0, hi: 4.0 }, &Value::Vector(vec![0.0, 3.9]), 8, &mut out);
        assert_eq!(out, vec![7, 1, 2, 7, 3, 0, 7]);
    }

    #[test]
    fn epsilon_schedule() {
        let hp = Hyperparams { total_steps: 100, ..Hyperparams::default() };
        assert_eq!(hp.epsilon(0), 1.0);
        assert!((hp.epsilon(25) - 0.525).abs() < 1e-12);
        assert_eq!(hp.epsilon(50), 0.05);
        assert_eq!(hp.epsilon(99), 0.05);
    }

    #[test]
    fn ties_break_towards_the_first_action() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[0.0, 1.0, 1.0]), 1);
    }

    #[test]
    fn policies_survive_serialisation() {
        let mut p = Policy::new(vec!["NOOP".into(), "GO".into()], vec!["x".into()], 8, 0.0);
        p.q.insert(vec![1], vec![0.5, -0.25]);
        p.q.insert(vec![0], vec![1.0, 2.0]);
        assert_eq!(Policy::from_json(&p.to_json()).unwrap(), p);
    }

    #[test]
    fn mismatched_action_sets_are_rejected() {
        let a = load("actions NOOP\nmax_steps 1\nscore s\nvar s: int[0, 1] = 0\n").unwrap();
        let b = load("actions NOOP GO\nmax_steps 1\nscore s\nvar s: int[0, 1] = 0\n").unwrap();
        assert!(matches!(train(&[&a, &b], &Hyperparams::default(), 0), Err(RlError::IncompatibleActionSets { index: 1, .. })));
    }
}

//! The factored runtime and the flat joint table are two independent routes
//! to the same transition kernel.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use fsim_core::dsl::load;
use fsim_core::flatten::{flatten_enumerate, FlatTable};
use fsim_core::ir::FactoredPomdp;
use fsim_core::rng::EpisodeRng;
use fsim_core::runtime::{step, step_distribution, RenderConfig, SimState};
use fsim_core::testgen::{random_pomdp, GenConfig};
use fsim_core::value::Value;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn state_at(t: &FlatTable, s: usize) -> SimState {
    SimState { values: t.state_map(s), step_count: 0, terminated: false }
}

/// Largest absolute difference between the runtime's distribution and the
/// table row, over every joint state and action.
fn max_deviation(p: &FactoredPomdp, t: &FlatTable) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..t.num_states() {
        let state = state_at(t, s);
        for (a, action) in p.actions.iter().enumerate() {
            let mut from_runtime: BTreeMap<usize, f64> = BTreeMap::new();
            for (next, prob) in step_distribution(p, &state, action).expect("finite program") {
                let idx = t.state_index(&next.values).expect("next state inside the domains");
                *from_runtime.entry(idx).or_default() += prob;
            }
            let row: BTreeMap<usize, f64> = t.row(s, a).iter().copied().collect();
            for k in from_runtime.keys().chain(row.keys()) {
                let d = (from_runtime.get(k).copied().unwrap_or(0.0) - row.get(k).copied().unwrap_or(0.0)).abs();
                worst = worst.max(d);
            }
        }
    }
    worst
}

#[test]
fn random_finite_programs_match_their_flat_tables() {
    let started = Instant::now();
    let cfg = GenConfig::finite_small();
    let mut stochastic = 0;
    for seed in 0..50 {
        let p = random_pomdp(seed, &cfg);
        let t = flatten_enumerate(&p).expect("small finite program");
        assert!(p.variables.len() <= 4 && p.actions.len() <= 3 && p.factors.len() <= 6);
        for s in 0..t.num_states() {
            for a in 0..p.actions.len() {
                let total: f64 = t.row(s, a).iter().map(|(_, q)| q).sum();
                assert!((total - 1.0).abs() < 1e-12, "seed {seed}: row sums to {total}");
                stochastic += usize::from(t.row(s, a).len() > 1);
            }
        }
        let dev = max_deviation(&p, &t);
        assert!(dev <= 1e-12, "seed {seed}: deviation {dev}");
    }
    assert!(stochastic > 0, "generator produced no stochastic transitions");
    assert!(started.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn reward_is_the_score_change() {
    for seed in 0..20 {
        let p = random_pomdp(seed, &GenConfig::finite_small());
        let t = flatten_enumerate(&p).unwrap();
        for s in 0..t.num_states() {
            for a in 0..p.actions.len() {
                let expected: f64 = step_distribution(&p, &state_at(&t, s), &p.actions[a])
                    .unwrap()
                    .iter()
                    .map(|(n, q)| q * (n.values[&p.score_id].as_f64().unwrap() - t.states[s][0].as_f64().unwrap()))
                    .sum();
                assert!((t.expected_reward(s, a) - expected).abs() < 1e-12);
            }
        }
    }
}

const DICE: &str = r#"actions NOOP ROLL
max_steps 10
score s
var s: int[0, 3] = 0
var d: int[1, 3] = 1
var c: bool = false
controller roll writes(d) {
  if action == :ROLL {
    d := 1 + categorical(1, 2, 3)
  }
}
model flip writes(c) {
  c := bernoulli(0.25)
}
reward r reads(d, c) writes(s) {
  if c and d == 3 {
    s += 1
  }
}
"#;

/// Sampled steps follow the enumerated distribution (chi-square, α = 0.001).
#[test]
fn sampled_steps_follow_the_exact_distribution() {
    let p = load(DICE).unwrap();
    let values = [("s", Value::Int(0)), ("d", Value::Int(1)), ("c", Value::Bool(false))];
    let start = SimState { values: values.into_iter().map(|(k, v)| (k.to_string(), v)).collect(), step_count: 0, terminated: false };
    let exact = step_distribution(&p, &start, "ROLL").unwrap();
    assert_eq!(exact.len(), 6);
    let key = |s: &SimState| serde_json::to_string(&s.values).unwrap();
    let index: BTreeMap<String, usize> = exact.iter().enumerate().map(|(i, (s, _))| (key(s), i)).collect();
    let n = 20_000u64;
    let mut counts = vec![0u64; exact.len()];
    for seed in 0..n {
        let mut rng = EpisodeRng::new(seed);
        let r = step(&p, &start, "ROLL", &mut rng, &RenderConfig::shapes_only()).unwrap();
        counts[index[&key(&r.state)]] += 1;
    }
    let stat: f64 = exact
        .iter()
        .zip(&counts)
        .map(|((_, q), c)| {
            let e = q * n as f64;
            (*c as f64 - e).powi(2) / e
        })
        .sum();
    let critical = ChiSquared::new((exact.len() - 1) as f64).unwrap().inverse_cdf(0.999);
    assert!(stat < critical, "chi-square {stat} exceeds {critical}: {counts:?}");
}

#[test]
fn real_domains_cannot_be_flattened() {
    let p = common::load_fixture("catcher.fsim");
    assert!(matches!(flatten_enumerate(&p), Err(fsim_core::ir::IrError::NotFinite(v)) if v == "score"));
}

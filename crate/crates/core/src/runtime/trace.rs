//! Whole-episode traces, serialisable as one JSON document.

use serde::{Deserialize, Serialize};

use super::{Episode, Observation, RenderConfig, RuntimeError, SimState};
use crate::eval::{Shape, Warning};
use crate::ir::FactoredPomdp;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub action: String,
    pub reward: f64,
    pub done: bool,
    pub state: SimState,
    pub shapes: Vec<Shape>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub program: String,
    pub seed: u64,
    pub initial: SimState,
    pub initial_shapes: Vec<Shape>,
    pub steps: Vec<TraceStep>,
    pub total_reward: f64,
}

impl Trace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("traces serialise")
    }
}

/// Runs one episode to completion, asking `policy` for each action.
pub fn run_episode(
    p: &FactoredPomdp,
    seed: u64,
    policy: &mut dyn FnMut(&SimState, &Observation) -> String,
) -> Result<Trace, RuntimeError> {
    let mut ep = Episode::new(p, seed, RenderConfig::shapes_only())?;
    let initial = ep.state().clone();
    let initial_shapes = ep.observation().shapes.clone();
    let mut steps = Vec::new();
    let mut total_reward = 0.0;
    while !ep.done() {
        let action = policy(ep.state(), ep.observation());
        let r = ep.step(&action)?;
        total_reward += r.reward;
        steps.push(TraceStep {
            action,
            reward: r.reward,
            done: r.done,
            state: r.state,
            shapes: r.observation.shapes,
            warnings: r.warnings,
        });
    }
    Ok(Trace { program: p.metadata.name.clone(), seed, initial, initial_shapes, steps, total_reward })
}

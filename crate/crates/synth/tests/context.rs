//! Context selection: which variables and factors a step gets to see.

mod common;

use std::collections::BTreeSet;

use common::{ok, replay};
use fsim_core::diag::DiagCode;
use fsim_core::dsl::{format_factor, format_variable, load};
use fsim_core::ir::FactoredPomdp;
use fsim_core::testgen::{random_pomdp, GenConfig};
use fsim_synth::transcript::StepStatus;
use fsim_synth::{Message, Purpose, ScriptProvider, SynthConfig, SynthError, Synthesizer};
use proptest::prelude::*;

const AGENTS: &str = r#"simulation "agents" "Three dots."
actions NOOP LEFT RIGHT
max_steps 100
score score

var score: real[-1000000.0, 1000000.0] = 0.0
var red_x: int[0, 63] = 10
var red_y: int[0, 63] = 10
var green_x: int[0, 63] = 30
var green_y: int[0, 63] = 30
var blue_x: int[0, 63] = 50
var blue_y: int[0, 63] = 50

controller move_red[0] reads(red_x) writes(red_x) {
  if action == :LEFT {
    red_x := clamp(red_x - 1, 0, 63)
  } else if action == :RIGHT {
    red_x := clamp(red_x + 1, 0, 63)
  }
}

model drift_green[0] reads(green_x) writes(green_x) {
  green_x := clamp(green_x + 1, 0, 63)
}

view draw_red[0] reads(red_x, red_y) {
  circle(red_x, red_y, 2, red)
}

view draw_green[1] reads(green_x, green_y) {
  circle(green_x, green_y, 2, green)
}

view draw_blue[2] reads(blue_x, blue_y) {
  circle(blue_x, blue_y, 2, blue)
}
"#;

const CHASE: &str = r#"=== select_context
{"new_variables": [], "relevant": ["red_x", "red_y", "blue_x", "blue_y"]}
=== controller
{"factors": []}
=== model
{"factors": [{"id": "chase", "kind": "model", "scope": ["red_x", "blue_x"], "targets": ["blue_x"],
  "body_source": "if red_x < blue_x {\n  blue_x := blue_x - 1\n} else if red_x > blue_x {\n  blue_x := blue_x + 1\n}"}]}
=== view
{"factors": []}
"#;

fn texts(messages: &[Message]) -> String {
    messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n")
}

#[test]
fn chasing_step_sees_red_and_blue_but_not_green() {
    let program = load(AGENTS).unwrap();
    let provider = ScriptProvider::parse(CHASE).unwrap();
    let cfg = SynthConfig::default();
    let mut s = Synthesizer::new(&provider, &cfg);
    let (mut m, ctx) = s.select_context(&program, 1, "Make the blue agent chase the red agent horizontally.").unwrap();
    for id in ["red_x", "red_y", "blue_x", "blue_y"] {
        assert!(ctx.z.contains(id), "{id} missing from z");
    }
    assert!(!ctx.z.contains("green_x") && !ctx.z.contains("green_y"));
    let retrieved: Vec<&str> = ctx.retrieved_factors.iter().map(|f| f.id.as_str()).collect();
    assert_eq!(retrieved, vec!["move_red", "draw_red", "draw_blue"]);

    for purpose in [Purpose::Controller, Purpose::Model, Purpose::View] {
        let prompt = texts(&s.generation_prompt(purpose, &ctx));
        for green in ["drift_green", "draw_green", "green_x", "green_y"] {
            assert!(!prompt.contains(green), "{purpose} prompt mentions {green}");
        }
        assert!(prompt.contains(&format_variable(program.variable("blue_x").unwrap())));
        let attempt = s.generate(purpose, &ctx).unwrap();
        m = s.apply_with_repair(&m, attempt, &ctx).unwrap().0;
    }
    let controller = texts(&s.generation_prompt(Purpose::Controller, &ctx));
    assert!(controller.contains(&format_factor(program.factor("move_red").unwrap())));
    assert!(!controller.contains("draw_red"), "views are only shown to the view call");
    assert!(m.factor("chase").is_some());
}

/// Every factor whose scope or targets meet `z`, by direct set intersection.
fn overlap_oracle(p: &FactoredPomdp, z: &[String]) -> BTreeSet<String> {
    let z: BTreeSet<&str> = z.iter().map(String::as_str).collect();
    p.factors
        .iter()
        .filter(|f| f.scope.iter().chain(f.targets.iter()).any(|id| z.contains(id)))
        .map(|f| f.id.clone())
        .collect()
}

#[test]
fn retrieved_factors_match_the_overlap_oracle() {
    for name in ["catcher", "pong", "catcher_wide"] {
        let (_, t) = ok(replay(name));
        let programs = t.rebuild().unwrap();
        assert_eq!(programs.len(), t.steps.len() + 1);
        for (k, step) in t.steps.iter().enumerate() {
            let ctx = step.context.as_ref().unwrap();
            let got: BTreeSet<String> = ctx.retrieved_factors.iter().cloned().collect();
            assert_eq!(got, overlap_oracle(&programs[k], &ctx.z), "{name} step {}", step.index);
        }
        assert!(t.steps[0].context.as_ref().unwrap().retrieved_factors.is_empty());
    }
}

/// Each step keeps every earlier variable and factor, adds only what its
/// patch names, and each patch's factors touch only the step's scope set
/// plus the score.
#[test]
fn construction_is_monotone_and_local() {
    for name in ["catcher", "pong"] {
        let (_, t) = ok(replay(name));
        let programs = t.rebuild().unwrap();
        for (k, step) in t.steps.iter().enumerate() {
            assert_eq!(step.status, StepStatus::Completed);
            let (before, after) = (&programs[k], &programs[k + 1]);
            for v in &before.variables {
                assert_eq!(after.variable(&v.id), Some(v));
            }
            for f in &before.factors {
                assert_eq!(after.factor(&f.id), Some(f), "{name} step {} changed {}", step.index, f.id);
            }
            let patch = step.patch.as_ref().unwrap();
            assert_eq!(after.variables.len(), before.variables.len() + patch.new_variables.len());
            assert_eq!(after.factors.len(), before.factors.len() + patch.factors.len());
            let ctx = step.context.as_ref().unwrap();
            for f in &patch.factors {
                for id in f.scope.iter().chain(&f.targets) {
                    assert!(ctx.z.contains(id) || id == "score", "{name} step {}: {} touches {id}", step.index, f.id);
                }
            }
        }
    }
}

#[test]
fn leaked_factor_source_is_detected() {
    let (_, mut t) = ok(replay("catcher"));
    // Step 2 retrieves nothing; plant step 1's controller in its model prompt.
    let leaked = "controller move_paddle";
    let programs = t.rebuild().unwrap();
    let source = format_factor(programs[1].factor("move_paddle").unwrap());
    assert!(source.starts_with(leaked));
    let step = &mut t.steps[1];
    assert!(step.context.as_ref().unwrap().retrieved_factors.is_empty());
    let e = step.exchanges.iter_mut().find(|e| e.purpose == Purpose::Model).unwrap();
    e.messages[1].content.push_str(&source);
    let v = t.context_violations().unwrap();
    assert_eq!(v.len(), 1);
    assert_eq!((v[0].step, v[0].purpose, v[0].leaked.as_str()), (2, Purpose::Model, "factor move_paddle"));
}

#[test]
fn bad_variable_proposals_fail_after_one_repair() {
    let script = "=== select_context\n{\"new_variables\": [{\"id\": \"score\", \"domain\": \"int[0, 3]\", \"init\": \"= 0\"}]}\n\
                  === select_context\n{\"new_variables\": [], \"relevant\": [\"ghost\"]}\n";
    let provider = ScriptProvider::parse(script).unwrap();
    let cfg = SynthConfig::default();
    let mut s = Synthesizer::new(&provider, &cfg);
    let plan = fsim_synth::pipeline::Plan { name: "p".into(), description: String::new(), actions: vec![], max_steps: 10, steps: vec!["x".into()] };
    let m = fsim_synth::pipeline::initial_program(&plan).unwrap();
    let err = s.select_context(&m, 1, "x").unwrap_err();
    match err {
        SynthError::InvalidVariableProposal { step: 1, diagnostics } => {
            assert!(diagnostics.iter().any(|d| d.code == DiagCode::UndeclaredVariable), "{diagnostics:?}");
        }
        other => panic!("unexpected {other}"),
    }
    let log = s.take_log();
    assert_eq!(log.len(), 2);
    assert!(texts(&log[1].messages).contains("already"), "repair prompt carries the first diagnostics");
}

fn check_selection(p: &FactoredPomdp, mask: u64) -> Result<(), TestCaseError> {
    let relevant: Vec<String> = p.variables.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, v)| v.id.clone()).collect();
    let reply = serde_json::json!({"new_variables": [], "relevant": relevant});
    let provider = ScriptProvider::parse(&format!("=== select_context\n{reply}\n")).unwrap();
    let cfg = SynthConfig::default();
    let mut s = Synthesizer::new(&provider, &cfg);
    let (_, ctx) = s.select_context(p, 1, "step").unwrap();
    let got: BTreeSet<String> = ctx.retrieved_factors.iter().map(|f| f.id.clone()).collect();
    prop_assert_eq!(&got, &overlap_oracle(p, ctx.z.ids()));
    for purpose in [Purpose::Controller, Purpose::Model, Purpose::View] {
        let prompt = texts(&s.generation_prompt(purpose, &ctx));
        for f in p.factors.iter().filter(|f| !got.contains(&f.id)) {
            prop_assert!(!prompt.contains(&format_factor(f)), "{} leaked into {}", f.id, purpose);
        }
        for v in p.variables.iter().filter(|v| !ctx.z.contains(&v.id)) {
            prop_assert!(!prompt.contains(&format_variable(v)), "{} leaked into {}", v.id, purpose);
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn selection_matches_the_oracle_and_prompts_stay_bounded(seed in any::<u64>(), mask in any::<u64>()) {
        check_selection(&random_pomdp(seed, &GenConfig::broad()), mask)?;
    }
}

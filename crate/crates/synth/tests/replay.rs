//! Offline runs from the checked-in scripts and cassettes.

mod common;

use common::{cassette, golden, ok, replay, scenario, script};
use fsim_core::dsl::format_program;
use fsim_synth::{
    synthesize, Cassette, ProviderError, Recorder, ReplayMode, ReplayProvider, SynthConfig, SynthError, TokenCounts,
};

const SCENARIOS: [&str; 9] =
    ["all_invalid", "catcher", "catcher_fast", "catcher_slow", "catcher_wide", "empty_world", "pong", "repair", "waterworld"];

/// Runs the script through a recorder and returns the cassette it yields.
fn record(name: &str) -> Cassette {
    let rec = Recorder::new(script(name));
    let _ = synthesize(&scenario(name, "spec.txt"), &rec, &SynthConfig::default());
    rec.cassette()
}

/// Set `FSIM_REGENERATE_CASSETTES=1` to rewrite the cassettes after a
/// prompt template change.
#[test]
fn scripts_reproduce_the_checked_in_cassettes() {
    let regenerate = std::env::var_os("FSIM_REGENERATE_CASSETTES").is_some();
    for name in SCENARIOS {
        let fresh = record(name).to_json();
        let path = common::fixture_dir().join(format!("synth/{name}/cassette.json"));
        if regenerate {
            std::fs::write(&path, &fresh).unwrap();
        }
        assert!(fresh == scenario(name, "cassette.json"), "{name}: cassette is stale; regenerate it");
    }
}

#[test]
fn catcher_and_pong_replay_deterministically() {
    for name in ["catcher", "pong"] {
        let runs: Vec<_> = (0..3).map(|_| ok(replay(name))).collect();
        let text = format_program(&runs[0].0);
        assert_eq!(text, golden(name), "{name}: program differs from the golden");
        for (m, t) in &runs[1..] {
            assert_eq!(format_program(m), text);
            assert_eq!(t.to_json(), runs[0].1.to_json());
        }
        assert_eq!(runs[0].1.final_program.as_deref(), Some(text.as_str()));
    }
}

#[test]
fn prompts_stay_inside_the_retrieved_context() {
    for name in ["catcher", "pong", "catcher_fast", "catcher_slow", "catcher_wide", "repair"] {
        let (_, t) = ok(replay(name));
        let violations = t.context_violations().unwrap();
        assert!(violations.is_empty(), "{name}: {violations:?}");
        // The last step of each game does retrieve earlier factors.
        if name == "catcher" || name == "pong" {
            let last = t.steps.last().unwrap();
            assert!(!last.context.as_ref().unwrap().retrieved_factors.is_empty());
        }
    }
}

#[test]
fn variants_match_their_goldens() {
    for name in ["catcher_fast", "catcher_slow", "catcher_wide"] {
        let (m, _) = ok(replay(name));
        assert_eq!(format_program(&m), golden(name), "{name}");
    }
}

#[test]
fn empty_world_is_the_initial_program() {
    let (m, t) = ok(replay("empty_world"));
    assert_eq!(m.variables.len(), 1);
    assert_eq!(m.score_id, "score");
    assert!(m.factors.is_empty());
    assert_eq!(m.actions, vec!["NOOP".to_string()]);
    assert_eq!(t.rebuild().unwrap().len(), 2);
}

#[test]
fn waterworld_plan_mentions_the_red_enemies() {
    let provider = ReplayProvider::new(cassette("waterworld"), ReplayMode::Strict);
    let cfg = SynthConfig::default();
    let plan = fsim_synth::Synthesizer::new(&provider, &cfg).decompose(&scenario("waterworld", "spec.txt")).unwrap();
    assert!(plan.steps.iter().any(|s| s.contains("red dot enemies") && s.contains("-1 reward")), "{:?}", plan.steps);
    assert!(plan.steps.len() >= 3);
}

#[test]
fn empty_spec_is_refused_before_any_call() {
    let provider = ReplayProvider::new(Cassette::new(vec![]), ReplayMode::Strict);
    let err = synthesize("  \n", &provider, &SynthConfig::default()).unwrap_err();
    assert!(matches!(err.error, SynthError::EmptySpec));
    assert_eq!(provider.consumed(), 0);
}

#[test]
fn unparsable_plan_gets_one_reprompt() {
    let text = "=== decompose\nI would rather not.\n\n=== decompose\n{\"name\": \"x\", \"max_steps\": 10, \"steps\": []}\n";
    let provider = fsim_synth::ScriptProvider::parse(text).unwrap();
    let err = synthesize("a game", &provider, &SynthConfig::default()).unwrap_err();
    assert!(matches!(err.error, SynthError::UnparsablePlan { .. }), "{}", err.error);
    let t = &err.transcript;
    assert_eq!(t.plan_exchanges.len(), 2);
    // The reprompt carries the first reply and the parse error.
    let second = &t.plan_exchanges[1].messages;
    assert_eq!(second.len(), 4);
    assert_eq!(second[2].content, "I would rather not.");
}

#[test]
fn strict_replay_rejects_changed_prompts_and_lenient_replay_does_not() {
    let mut cfg = SynthConfig::default();
    cfg.templates.system.push_str("\nBe brief.");
    let provider = ReplayProvider::new(cassette("catcher"), ReplayMode::Strict);
    let err = synthesize(&scenario("catcher", "spec.txt"), &provider, &cfg).unwrap_err();
    assert!(matches!(err.error, SynthError::Provider(ProviderError::FingerprintMismatch { index: 0, .. })));
    assert_eq!(provider.consumed(), 0);

    let lenient = ReplayProvider::new(cassette("catcher"), ReplayMode::Lenient);
    let (m, _) = ok(synthesize(&scenario("catcher", "spec.txt"), &lenient, &cfg));
    assert_eq!(format_program(&m), golden("catcher"));
    assert_eq!(lenient.remaining(), 0);
}

#[test]
fn exhausted_cassette_is_a_provider_error_with_a_partial_transcript() {
    let mut c = cassette("catcher");
    c.records.truncate(6);
    let provider = ReplayProvider::new(c, ReplayMode::Strict);
    let err = synthesize(&scenario("catcher", "spec.txt"), &provider, &SynthConfig::default()).unwrap_err();
    assert!(matches!(err.error, SynthError::Provider(ProviderError::CassetteExhausted { index: 6 })));
    assert_eq!(err.transcript.token_totals, err.transcript.recount_tokens());
}

#[test]
fn token_totals_are_the_sum_of_responses() {
    for name in ["catcher", "pong", "repair"] {
        let (_, t) = ok(replay(name));
        let mut by_hand = TokenCounts::default();
        for e in t.plan_exchanges.iter().chain(t.steps.iter().flat_map(|s| &s.exchanges)) {
            by_hand.prompt += e.tokens.prompt;
            by_hand.completion += e.tokens.completion;
        }
        assert_eq!(t.token_totals, by_hand, "{name}");
        assert_eq!(t.token_totals, cassette(name).token_total(), "{name}");
        assert!(t.token_totals.prompt > 0 && t.token_totals.completion > 0);
    }
}

#[test]
fn transcripts_round_trip_and_replay_themselves() {
    let (m, t) = ok(replay("pong"));
    let back = fsim_synth::Transcript::from_json(&t.to_json()).unwrap();
    assert_eq!(back, t);
    assert_eq!(back.to_cassette().to_json(), scenario("pong", "cassette.json"));
    assert_eq!(back.rebuild().unwrap().last().unwrap(), &m);
}

#![allow(dead_code)]

use std::path::PathBuf;

use fsim_core::ir::FactoredPomdp;
use fsim_synth::{synthesize, Cassette, ReplayMode, ReplayProvider, ScriptProvider, SynthConfig, SynthFailure, Transcript};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn read(rel: &str) -> String {
    std::fs::read_to_string(fixture_dir().join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn scenario(name: &str, file: &str) -> String {
    read(&format!("synth/{name}/{file}"))
}

pub fn script(name: &str) -> ScriptProvider {
    ScriptProvider::parse(&scenario(name, "script.txt")).expect("script parses")
}

pub fn cassette(name: &str) -> Cassette {
    Cassette::parse(&scenario(name, "cassette.json")).expect("cassette parses")
}

pub type Outcome = Result<(FactoredPomdp, Transcript), SynthFailure>;

pub fn replay(name: &str) -> Outcome {
    replay_with(name, &SynthConfig::default())
}

pub fn replay_with(name: &str, cfg: &SynthConfig) -> Outcome {
    let provider = ReplayProvider::new(cassette(name), ReplayMode::Strict);
    synthesize(&scenario(name, "spec.txt"), &provider, cfg)
}

/// Golden program text for a scenario: its own `golden.fsim`, or the
/// top-level fixture of the same name.
pub fn golden(name: &str) -> String {
    let own = fixture_dir().join(format!("synth/{name}/golden.fsim"));
    std::fs::read_to_string(&own).unwrap_or_else(|_| read(&format!("{name}.fsim")))
}

pub fn ok(outcome: Outcome) -> (FactoredPomdp, Transcript) {
    outcome.unwrap_or_else(|f| panic!("synthesis failed: {}", f.error))
}

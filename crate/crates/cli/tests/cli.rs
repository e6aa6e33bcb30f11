use std::path::PathBuf;
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsim")).args(args).current_dir(fixtures()).output().expect("fsim runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn check_accepts_fixtures_and_reports_broken_files() {
    let o = fsim(&["check", "catcher.fsim", "pong.fsim"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("catcher.fsim: ok (7 variables"), "{}", stdout(&o));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.fsim");
    let src = std::fs::read_to_string(fixtures().join("catcher.fsim")).unwrap().replace("reads(fruit_y) writes(fruit_y, fruit_x)", "writes(fruit_y, fruit_x)");
    std::fs::write(&bad, src).unwrap();
    let o = fsim(&["check", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("ScopeViolation"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&fsim(&[])), 1);
    assert_eq!(code(&fsim(&["frobnicate"])), 1);
    assert_eq!(code(&fsim(&["check", "no-such-file.fsim"])), 1);
    assert_eq!(code(&fsim(&["synth", "synth/catcher/spec.txt"])), 1, "a provider must be chosen");
    assert_eq!(code(&fsim(&["--help"])), 0);
}

#[test]
fn synth_replay_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = fsim(&["synth", "--replay", "synth/pong/cassette.json", "--out", out.to_str().unwrap(), "synth/pong/spec.txt"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let program = std::fs::read_to_string(out.join("program.fsim")).unwrap();
        let transcript = std::fs::read_to_string(out.join("transcript.json")).unwrap();
        outputs.push((program, transcript));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0].0, std::fs::read_to_string(fixtures().join("pong.fsim")).unwrap());
}

#[test]
fn synth_failures_keep_the_partial_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = fsim(&["synth", "--replay", "synth/all_invalid/cassette.json", "--out", out.to_str().unwrap(), "synth/all_invalid/spec.txt"]);
    assert_eq!(code(&o), 3);
    assert!(out.join("transcript.json").exists());
    assert!(!out.join("program.fsim").exists());

    let o = fsim(&["synth", "--replay", "synth/waterworld/cassette.json", "--out", out.to_str().unwrap(), "synth/waterworld/spec.txt"]);
    assert_eq!(code(&o), 5, "an exhausted cassette is a provider failure");
}

#[test]
fn test_command_passes_the_reference_and_fails_a_mutant() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let o = fsim(&["test", "catcher.fsim", "suites/catcher.json", "-o", report.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let o = fsim(&["test", "mutants/catcher_inverted_controls.fsim", "suites/catcher.json"]);
    assert_eq!(code(&o), 4);
    assert!(stdout(&o).contains("FAIL"));

    let transcript = dir.path().join("t");
    let o = fsim(&["synth", "--replay", "synth/catcher/cassette.json", "--out", transcript.to_str().unwrap(), "synth/catcher/spec.txt"]);
    assert_eq!(code(&o), 0);
    let o = fsim(&["report", report.to_str().unwrap(), transcript.join("transcript.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = stdout(&o);
    let row = table.lines().find(|l| l.starts_with("catcher")).unwrap();
    assert!(row.contains("1.000"), "{table}");
}

#[test]
fn run_writes_a_deterministic_trace() {
    let dir = tempfile::tempdir().unwrap();
    let traces: Vec<String> = (0..2)
        .map(|i| {
            let out = dir.path().join(format!("t{i}.json"));
            let o = fsim(&["run", "catcher.fsim", "--seed", "4", "--policy", "random", "--out", out.to_str().unwrap()]);
            assert_eq!(code(&o), 0, "{}", stderr(&o));
            std::fs::read_to_string(out).unwrap()
        })
        .collect();
    assert_eq!(traces[0], traces[1]);
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let policy = dir.path().join("p.json");
    let o = fsim(&["train", "rl/corridor.fsim", "--steps", "20000", "--out", policy.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = fsim(&["eval", "--reference", "rl/corridor.fsim", "--policy", policy.to_str().unwrap(), "--episodes", "5", "--baseline-steps", "20000"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let chain = dir.path().join("chain.json");
    let o = fsim(&["train", "rl/chain.fsim", "--steps", "1000", "--out", chain.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = fsim(&["eval", "--reference", "catcher.fsim", "--policy", chain.to_str().unwrap(), "--episodes", "5"]);
    assert_eq!(code(&o), 2, "a policy with other actions is refused");
}

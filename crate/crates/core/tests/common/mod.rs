#![allow(dead_code)]

use std::path::PathBuf;

use fsim_core::dsl;
use fsim_core::ir::FactoredPomdp;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn load_fixture(name: &str) -> FactoredPomdp {
    let src = read_fixture(name);
    dsl::load(&src).unwrap_or_else(|d| panic!("{name}: {}", d.iter().map(|x| x.render(&src)).collect::<Vec<_>>().join("\n")))
}

fn fsim_files(dir: &str) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(fixture_dir().join(dir))
        .expect("fixtures dir")
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".fsim"))
        .map(|n| if dir.is_empty() { n } else { format!("{dir}/{n}") })
        .collect();
    names.sort();
    names
}

/// The top-level game fixtures.
pub fn reference_fixtures() -> Vec<(String, FactoredPomdp)> {
    fsim_files("").into_iter().map(|n| (n.clone(), load_fixture(&n))).collect()
}

/// Every shipped `.fsim` file: mutants, RL fixtures and synthesis goldens included.
pub fn all_fixtures() -> Vec<(String, FactoredPomdp)> {
    ["", "mutants", "rl", "synth/catcher_fast", "synth/catcher_slow", "synth/catcher_wide"].iter().flat_map(|d| fsim_files(d)).map(|n| (n.clone(), load_fixture(&n))).collect()
}

pub fn int(state: &fsim_core::runtime::SimState, var: &str) -> i64 {
    match state.get(var) {
        Some(fsim_core::value::Value::Int(i)) => *i,
        other => panic!("`{var}` is not an int: {other:?}"),
    }
}

/// Moves the paddle under the fruit.
pub fn catcher_tracker(s: &fsim_core::runtime::SimState) -> String {
    let (px, fx) = (int(s, "paddle_x"), int(s, "fruit_x"));
    if fx < px - 1 { "LEFT" } else if fx > px + 1 { "RIGHT" } else { "NOOP" }.into()
}

/// Keeps the ball within the paddle's span.
pub fn pong_tracker(s: &fsim_core::runtime::SimState) -> String {
    let (by, py) = (int(s, "ball_y"), int(s, "paddle_y"));
    if by < py + 2 { "UP" } else if by > py + 5 { "DOWN" } else { "NOOP" }.into()
}

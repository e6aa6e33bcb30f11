//! Scripted system tests: inject action sequences, assert on states,
//! rewards, termination and rendered shapes; score suites by pass rate.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eval::{Shape, StateMap};
use crate::expr::{Color, ShapeKind};
use crate::ir::FactoredPomdp;
use crate::runtime::{Episode, RenderConfig};
use crate::value::{Domain, Value};

/// Tolerance for comparisons involving reals.
pub const REAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{location}: {message}")]
    Schema { location: String, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CmpOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    fn holds_f64(&self, a: f64, b: f64) -> bool {
        let eq = (a - b).abs() <= REAL_TOLERANCE;
        match self {
            CmpOp::Eq => eq,
            CmpOp::Ne => !eq,
            CmpOp::Lt => a < b && !eq,
            CmpOp::Le => a < b || eq,
            CmpOp::Gt => a > b && !eq,
            CmpOp::Ge => a > b || eq,
        }
    }

    fn ordering(&self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndMarker {
    End,
}

/// When an assertion is evaluated: after `n` steps, or after the script.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum At {
    Step(u64),
    End(EndMarker),
}

impl fmt::Display for At {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            At::Step(n) => write!(f, "step {n}"),
            At::End(_) => f.write_str("end"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    /// Compares a variable against a literal `value` or `other` variable.
    Var {
        at: At,
        var: String,
        op: CmpOp,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<Value>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        other: Option<String>,
    },
    /// Sum of rewards from reset up to `at`.
    TotalReward { at: At, op: CmpOp, value: f64 },
    /// Reward of the step that ended at `at`.
    StepReward { at: At, op: CmpOp, value: f64 },
    /// Whether the episode is over at `at`.
    Done { at: At, expect: bool },
    /// Whether the observation at `at` contains a matching primitive.
    Shape {
        at: At,
        shape: ShapeKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        color: Option<Color>,
        #[serde(default = "yes")]
        present: bool,
    },
}

fn yes() -> bool {
    true
}

impl Check {
    pub fn at(&self) -> At {
        match self {
            Check::Var { at, .. } | Check::TotalReward { at, .. } | Check::StepReward { at, .. } | Check::Done { at, .. } | Check::Shape { at, .. } => {
                *at
            }
        }
    }

    fn variables(&self) -> Vec<&str> {
        match self {
            Check::Var { var, other, .. } => std::iter::once(var.as_str()).chain(other.as_deref()).collect(),
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at {}: ", self.at())?;
        match self {
            Check::Var { var, op, value, other, .. } => {
                let rhs = match (value, other) {
                    (Some(v), _) => serde_json::to_string(v).unwrap_or_default(),
                    (None, Some(o)) => o.clone(),
                    (None, None) => "?".into(),
                };
                write!(f, "{var} {} {rhs}", op.symbol())
            }
            Check::TotalReward { op, value, .. } => write!(f, "total reward {} {value}", op.symbol()),
            Check::StepReward { op, value, .. } => write!(f, "step reward {} {value}", op.symbol()),
            Check::Done { expect, .. } => write!(f, "done is {expect}"),
            Check::Shape { shape, color, present, .. } => {
                let c = color.map(|c| format!(" {}", c.name())).unwrap_or_default();
                write!(f, "{}{} {}", shape.name(), c, if *present { "is drawn" } else { "is not drawn" })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptStep {
    Once(String),
    Repeat {
        action: String,
        #[serde(default = "one")]
        repeat: u64,
    },
}

fn one() -> u64 {
    1
}

impl ScriptStep {
    pub fn action(&self) -> &str {
        match self {
            ScriptStep::Once(a) | ScriptStep::Repeat { action: a, .. } => a,
        }
    }

    pub fn repeat(&self) -> u64 {
        match self {
            ScriptStep::Once(_) => 1,
            ScriptStep::Repeat { repeat, .. } => *repeat,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemTest {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// Overrides applied after reset, in key order.
    #[serde(default)]
    pub setup: BTreeMap<String, Value>,
    #[serde(default)]
    pub script: Vec<ScriptStep>,
    pub assertions: Vec<Check>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteFile {
    #[serde(default)]
    #[allow(dead_code)]
    program: Option<String>,
    tests: Vec<SystemTest>,
}

/// Parses a suite document.
pub fn parse_suite(json: &str) -> Result<Vec<SystemTest>, SuiteError> {
    let file: SuiteFile = serde_json::from_str(json).map_err(|e| SuiteError::Schema {
        location: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    let mut seen = BTreeSet::new();
    for (i, t) in file.tests.iter().enumerate() {
        let loc = |field: &str| format!("tests[{i}]{field}");
        if !seen.insert(t.name.as_str()) {
            return Err(SuiteError::Schema { location: loc(".name"), message: format!("duplicate test name `{}`", t.name) });
        }
        for (j, c) in t.assertions.iter().enumerate() {
            if let Check::Var { value, other, .. } = c {
                if value.is_some() == other.is_some() {
                    return Err(SuiteError::Schema {
                        location: loc(&format!(".assertions[{j}]")),
                        message: "a var check needs exactly one of `value` and `other`".into(),
                    });
                }
            }
        }
    }
    Ok(file.tests)
}

pub fn load_suite(path: &Path) -> Result<Vec<SystemTest>, SuiteError> {
    let text = std::fs::read_to_string(path).map_err(|source| SuiteError::Io { path: path.display().to_string(), source })?;
    parse_suite(&text)
}

/// One recorded point of a test run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSlice {
    pub step: u64,
    /// The action that led here; absent for the initial state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    pub reward: f64,
    pub done: bool,
    pub state: StateMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "UPPERCASE")]
pub enum Outcome {
    Pass,
    Fail {
        /// Index into the test's assertions.
        assertion: usize,
        check: String,
        detail: String,
        /// Up to three points around the failing step.
        trace: Vec<TraceSlice>,
    },
    Error {
        reason: String,
    },
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Pass => "PASS",
            Outcome::Fail { .. } => "FAIL",
            Outcome::Error { .. } => "ERROR",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    #[serde(flatten)]
    pub outcome: Outcome,
}

struct Point {
    action: Option<String>,
    reward: f64,
    total: f64,
    done: bool,
    state: StateMap,
    shapes: Vec<Shape>,
}

/// Checks that everything the test names exists in the program.
fn preflight(p: &FactoredPomdp, test: &SystemTest) -> Result<(), String> {
    for (var, value) in &test.setup {
        let v = p.variable(var).ok_or_else(|| format!("setup names unknown variable `{var}`"))?;
        crate::value::coerce(&v.domain, value.clone()).map_err(|e| format!("setup value for `{var}`: {e}"))?;
    }
    for step in &test.script {
        if !p.actions.iter().any(|a| a == step.action()) {
            return Err(format!("script uses unknown action `{}`", step.action()));
        }
    }
    for c in &test.assertions {
        for var in c.variables() {
            if p.variable(var).is_none() {
                return Err(format!("assertion `{c}` names unknown variable `{var}`"));
            }
        }
        if let Check::Var { var, value: Some(Value::Sym(label)), .. } = c {
            if let Some(Domain::Enum { labels }) = p.variable(var).map(|v| &v.domain) {
                if !labels.contains(label) {
                    return Err(format!("assertion `{c}` compares `{var}` with unknown label `{label}`"));
                }
            }
        }
    }
    Ok(())
}

fn compare(op: CmpOp, a: &Value, b: &Value) -> Result<bool, String> {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => Ok(op.holds_f64(x, y)),
        _ if op.ordering() => Err(format!("cannot order {} and {}", a.type_name(), b.type_name())),
        _ => {
            let eq = match (a, b) {
                (Value::Vector(x), Value::Vector(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| (p - q).abs() <= REAL_TOLERANCE),
                _ => a == b,
            };
            Ok(if op == CmpOp::Eq { eq } else { !eq })
        }
    }
}

fn show(v: &Value) -> String {
    serde_json::to_string(v).unwrap_or_default()
}

/// Evaluates one check at a recorded point. `Err` is an evaluation problem
/// (an ERROR); `Ok(Some(detail))` is a failed check.
fn evaluate(c: &Check, pt: &Point) -> Result<Option<String>, String> {
    let failed = |ok: bool, detail: String| if ok { None } else { Some(detail) };
    Ok(match c {
        Check::Var { var, op, value, other, .. } => {
            let lhs = &pt.state[var.as_str()];
            let rhs = match (value, other) {
                (Some(v), _) => v.clone(),
                (None, Some(o)) => pt.state[o.as_str()].clone(),
                (None, None) => return Err("var check without a right-hand side".into()),
            };
            failed(compare(*op, lhs, &rhs)?, format!("{var} is {}", show(lhs)))
        }
        Check::TotalReward { op, value, .. } => failed(op.holds_f64(pt.total, *value), format!("total reward is {}", pt.total)),
        Check::StepReward { op, value, .. } => failed(op.holds_f64(pt.reward, *value), format!("step reward is {}", pt.reward)),
        Check::Done { expect, .. } => failed(pt.done == *expect, format!("done is {}", pt.done)),
        Check::Shape { shape, color, present, .. } => {
            let found = pt.shapes.iter().any(|s| s.kind == *shape && color.is_none_or(|c| s.color == c));
            failed(found == *present, format!("{} matching shapes drawn", pt.shapes.len()))
        }
    })
}

/// Runs one test: reset with its seed, apply overrides, play the script
/// (stopping early if the episode ends), then evaluate assertions in order of
/// their step and declaration.
pub fn run_test(p: &FactoredPomdp, test: &SystemTest) -> TestResult {
    let outcome = match preflight(p, test) {
        Err(reason) => Outcome::Error { reason },
        Ok(()) => run_checked(p, test).unwrap_or_else(|reason| Outcome::Error { reason }),
    };
    TestResult { name: test.name.clone(), outcome }
}

fn run_checked(p: &FactoredPomdp, test: &SystemTest) -> Result<Outcome, String> {
    let mut ep = Episode::new(p, test.seed, RenderConfig::shapes_only()).map_err(|e| format!("reset: {e}"))?;
    for (var, value) in &test.setup {
        ep.set(var, value.clone()).map_err(|e| format!("setup: {e}"))?;
    }
    let mut points = vec![Point {
        action: None,
        reward: 0.0,
        total: 0.0,
        done: ep.done(),
        state: ep.state().values.clone(),
        shapes: ep.observation().shapes.clone(),
    }];
    let actions = test.script.iter().flat_map(|s| std::iter::repeat_n(s.action(), s.repeat() as usize));
    for action in actions {
        if ep.done() {
            break;
        }
        let r = ep.step(action).map_err(|e| format!("step {}: {e}", points.len()))?;
        let total = points.last().map_or(0.0, |pt| pt.total) + r.reward;
        points.push(Point { action: Some(action.to_string()), reward: r.reward, total, done: r.done, state: r.state.values, shapes: r.observation.shapes });
    }
    let end = points.len() as u64 - 1;
    let mut order: Vec<(u64, usize)> = test
        .assertions
        .iter()
        .enumerate()
        .map(|(i, c)| (match c.at() { At::Step(n) => n, At::End(_) => end }, i))
        .collect();
    order.sort();
    for (step, i) in order {
        let c = &test.assertions[i];
        let verdict = match points.get(step as usize) {
            None => Some(format!("the episode ended at step {end}")),
            Some(pt) => evaluate(c, pt).map_err(|e| format!("assertion `{c}`: {e}"))?,
        };
        if let Some(detail) = verdict {
            let lo = step.saturating_sub(1).min(end);
            let hi = (step + 1).min(end);
            let trace = (lo..=hi)
                .map(|k| {
                    let pt = &points[k as usize];
                    TraceSlice { step: k, action: pt.action.clone(), reward: pt.reward, done: pt.done, state: pt.state.clone() }
                })
                .collect();
            return Ok(Outcome::Fail { assertion: i, check: c.to_string(), detail, trace });
        }
    }
    Ok(Outcome::Pass)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub program: String,
    pub passed: usize,
    pub failed: usize,
    pub errors: usize,
    pub total: usize,
    /// `None` when the suite has no tests.
    pub pass_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Sorted by name.
    pub tests: Vec<TestResult>,
}

/// Runs every test; never stops early.
pub fn run_suite(p: &FactoredPomdp, tests: &[SystemTest]) -> SuiteReport {
    let mut results: Vec<TestResult> = tests.iter().map(|t| run_test(p, t)).collect();
    results.sort_by(|a, b| a.name.cmp(&b.name));
    let count = |label: &str| results.iter().filter(|r| r.outcome.label() == label).count();
    let (passed, failed, errors) = (count("PASS"), count("FAIL"), count("ERROR"));
    let total = results.len();
    SuiteReport {
        program: p.metadata.name.clone(),
        passed,
        failed,
        errors,
        total,
        pass_rate: (total > 0).then(|| passed as f64 / total as f64),
        error: (total == 0).then(|| "the suite has no tests".to_string()),
        tests: results,
    }
}

impl SuiteReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialise")
    }

    /// A fixed-width table followed by failure details.
    pub fn to_table(&self) -> String {
        let width = self.tests.iter().map(|t| t.name.len()).max().unwrap_or(4).max(4);
        let mut out = format!("{:<width$}  RESULT\n", "TEST");
        for t in &self.tests {
            out.push_str(&format!("{:<width$}  {}\n", t.name, t.outcome.label()));
        }
        for t in &self.tests {
            match &t.outcome {
                Outcome::Pass => {}
                Outcome::Fail { check, detail, trace, .. } => {
                    out.push_str(&format!("\n{} failed: {check} ({detail})\n", t.name));
                    for s in trace {
                        let state = serde_json::to_string(&s.state).unwrap_or_default();
                        out.push_str(&format!("  step {} {}: {state}\n", s.step, s.action.as_deref().unwrap_or("-")));
                    }
                }
                Outcome::Error { reason } => out.push_str(&format!("\n{} error: {reason}\n", t.name)),
            }
        }
        match (self.pass_rate, &self.error) {
            (Some(r), _) => out.push_str(&format!("\n{}/{} passed (pass rate {r:.3})\n", self.passed, self.total)),
            (None, Some(e)) => out.push_str(&format!("\nERROR: {e}\n")),
            (None, None) => {}
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::load;

    const PROG: &str = "actions NOOP UP\nmax_steps 5\nscore s\nvar s: int[0, 9] = 0\nvar x: int[0, 9] = 0\n\
        var mode: enum(a, b) = :a\n\
        controller c reads(x) writes(x) {\n  if action == :UP {\n    x := x + 1\n  }\n}\n\
        reward r reads(x) writes(s) {\n  s += x\n}\n\
        view v reads(x) {\n  circle(x, 0, 1, red)\n}\n";

    fn suite(tests: &str) -> Vec<SystemTest> {
        parse_suite(&format!("{{\"tests\": [{tests}]}}")).unwrap()
    }

    #[test]
    fn empty_program_with_reward_assertion_passes() {
        let p = load("actions NOOP\nmax_steps 3\nscore s\nvar s: real[0.0, 1.0] = 0.0\n").unwrap();
        let t = suite(r#"{"name": "zero", "script": [{"action": "NOOP", "repeat": 3}], "assertions": [{"check": "total_reward", "at": "end", "op": "==", "value": 0}]}"#);
        assert_eq!(run_test(&p, &t[0]).outcome, Outcome::Pass);
    }

    #[test]
    fn failures_carry_the_first_violated_check_and_trace() {
        let p = load(PROG).unwrap();
        let t = suite(
            r#"{"name": "up", "script": ["UP", {"action": "UP", "repeat": 2}],
               "assertions": [{"check": "var", "at": 3, "var": "x", "op": "==", "value": 2},
                              {"check": "var", "at": 1, "var": "x", "op": "==", "value": 1}]}"#,
        );
        let Outcome::Fail { assertion, detail, trace, .. } = run_test(&p, &t[0]).outcome else { panic!() };
        assert_eq!((assertion, detail.as_str()), (0, "x is 3"));
        assert_eq!(trace.iter().map(|s| s.step).collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn unknown_names_are_errors_not_failures() {
        let p = load(PROG).unwrap();
        for body in [
            r#"{"name": "a", "assertions": [{"check": "var", "at": 0, "var": "y", "op": "==", "value": 1}]}"#,
            r#"{"name": "a", "setup": {"y": 1}, "assertions": []}"#,
            r#"{"name": "a", "script": ["JUMP"], "assertions": []}"#,
            r#"{"name": "a", "assertions": [{"check": "var", "at": 0, "var": "mode", "op": "==", "value": "c"}]}"#,
            r#"{"name": "a", "assertions": [{"check": "var", "at": 0, "var": "mode", "op": "<", "value": "a"}]}"#,
        ] {
            assert_eq!(run_test(&p, &suite(body)[0]).outcome.label(), "ERROR", "{body}");
        }
    }

    #[test]
    fn every_check_kind() {
        let p = load(PROG).unwrap();
        let t = suite(
            r#"{"name": "all", "setup": {"x": 2}, "script": [{"action": "UP", "repeat": 9}], "assertions": [
                {"check": "shape", "at": 0, "shape": "circle", "color": "red"},
                {"check": "shape", "at": 0, "shape": "rect", "present": false},
                {"check": "step_reward", "at": 1, "op": "==", "value": 3},
                {"check": "total_reward", "at": 2, "op": ">=", "value": 7},
                {"check": "var", "at": 2, "var": "s", "op": ">", "other": "x"},
                {"check": "var", "at": 2, "var": "mode", "op": "!=", "value": "b"},
                {"check": "done", "at": "end", "expect": true},
                {"check": "done", "at": 4, "expect": false}]}"#,
        );
        assert_eq!(run_test(&p, &t[0]).outcome, Outcome::Pass);
        let late = suite(r#"{"name": "late", "script": [{"action": "UP", "repeat": 9}], "assertions": [{"check": "done", "at": 6, "expect": true}]}"#);
        assert_eq!(run_test(&p, &late[0]).outcome.label(), "FAIL");
    }

    #[test]
    fn schema_errors() {
        for bad in [
            r#"{"tests": [{"name": "a", "assertions": [{"check": "pixel", "at": 0}]}]}"#,
            r#"{"tests": [{"name": "a", "assertions": []}, {"name": "a", "assertions": []}]}"#,
            r#"{"tests": [{"name": "a", "assertions": [{"check": "var", "at": 0, "var": "x", "op": "=="}]}]}"#,
            r#"{"tests": [{"name": "a", "bogus": 1, "assertions": []}]}"#,
            r#"{"tests": [{"name": "a", "assertions": [{"check": "shape", "at": 0, "shape": "hexagon"}]}]}"#,
        ] {
            assert!(matches!(parse_suite(bad), Err(SuiteError::Schema { .. })), "{bad}");
        }
        assert!(parse_suite(r#"{"tests": []}"#).unwrap().is_empty());
    }

    #[test]
    fn empty_suite_is_a_suite_level_error() {
        let p = load(PROG).unwrap();
        let r = run_suite(&p, &[]);
        assert_eq!((r.pass_rate, r.total), (None, 0));
        assert!(r.error.is_some());
    }
}

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use fsim_core::verify::SuiteReport;
use fsim_synth::transcript::{ExchangeOutcome, StepStatus};
use fsim_synth::Transcript;
use serde::Serialize;

use crate::util::{fail, read, write, CmdResult, Exit};

#[derive(Args)]
pub struct ReportArgs {
    /// Synthesis transcripts and test-suite reports, in any order.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Where to write the aggregate as JSON.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

/// One row per program name.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Row {
    pub program: String,
    pub runs: usize,
    pub succeeded: usize,
    pub steps_completed: usize,
    pub provider_calls: usize,
    pub rejected_replies: usize,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub tests_passed: usize,
    pub tests_total: usize,
    pub pass_rate: Option<f64>,
}

#[derive(Debug, Default, Serialize)]
pub struct Aggregate {
    pub rows: Vec<Row>,
    pub total: Row,
}

fn add_transcript(row: &mut Row, t: &Transcript) {
    row.runs += 1;
    if t.final_program.is_some() {
        row.succeeded += 1;
    }
    row.steps_completed += t.steps.iter().filter(|s| s.status == StepStatus::Completed).count();
    let exchanges = t.exchanges();
    row.provider_calls += exchanges.len();
    row.rejected_replies += exchanges.iter().filter(|e| e.outcome != ExchangeOutcome::Accepted).count();
    row.prompt_tokens += t.token_totals.prompt;
    row.completion_tokens += t.token_totals.completion;
}

fn add_suite(row: &mut Row, r: &SuiteReport) {
    row.tests_passed += r.passed;
    row.tests_total += r.total;
}

fn finish(row: &mut Row) {
    row.pass_rate = (row.tests_total > 0).then(|| row.tests_passed as f64 / row.tests_total as f64);
}

pub fn aggregate(inputs: &[(String, String)]) -> Result<Aggregate, String> {
    let mut rows: BTreeMap<String, Row> = BTreeMap::new();
    for (name, text) in inputs {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| format!("{name}: {e}"))?;
        if value.get("spec_text").is_some() {
            let t: Transcript = serde_json::from_value(value).map_err(|e| format!("{name}: not a transcript: {e}"))?;
            let program = t.plan.as_ref().map(|p| p.name.clone()).unwrap_or_else(|| "(no plan)".into());
            add_transcript(rows.entry(program.clone()).or_insert_with(|| Row { program, ..Row::default() }), &t);
        } else if value.get("pass_rate").is_some() {
            let r: SuiteReport = serde_json::from_value(value).map_err(|e| format!("{name}: not a suite report: {e}"))?;
            let program = r.program.clone();
            add_suite(rows.entry(program.clone()).or_insert_with(|| Row { program, ..Row::default() }), &r);
        } else {
            return Err(format!("{name}: neither a transcript nor a suite report"));
        }
    }
    let mut total = Row { program: "TOTAL".into(), ..Row::default() };
    let mut out = Vec::new();
    for (_, mut row) in rows {
        finish(&mut row);
        total.runs += row.runs;
        total.succeeded += row.succeeded;
        total.steps_completed += row.steps_completed;
        total.provider_calls += row.provider_calls;
        total.rejected_replies += row.rejected_replies;
        total.prompt_tokens += row.prompt_tokens;
        total.completion_tokens += row.completion_tokens;
        total.tests_passed += row.tests_passed;
        total.tests_total += row.tests_total;
        out.push(row);
    }
    finish(&mut total);
    Ok(Aggregate { rows: out, total })
}

impl Aggregate {
    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.program.len()).max().unwrap_or(0).max(7);
        let mut s = format!(
            "{:<width$}  {:>4}  {:>4}  {:>5}  {:>5}  {:>8}  {:>10}  {:>10}  {:>7}  {:>9}\n",
            "PROGRAM", "RUNS", "OK", "STEPS", "CALLS", "REJECTED", "PROMPT_TOK", "COMPL_TOK", "TESTS", "PASS_RATE"
        );
        for r in self.rows.iter().chain(std::iter::once(&self.total)) {
            let rate = r.pass_rate.map_or("-".to_string(), |p| format!("{p:.3}"));
            s.push_str(&format!(
                "{:<width$}  {:>4}  {:>4}  {:>5}  {:>5}  {:>8}  {:>10}  {:>10}  {:>7}  {:>9}\n",
                r.program,
                r.runs,
                r.succeeded,
                r.steps_completed,
                r.provider_calls,
                r.rejected_replies,
                r.prompt_tokens,
                r.completion_tokens,
                format!("{}/{}", r.tests_passed, r.tests_total),
                rate
            ));
        }
        s
    }
}

pub fn run(args: ReportArgs) -> CmdResult {
    let mut inputs = Vec::new();
    for path in &args.inputs {
        inputs.push((path.display().to_string(), read(path)?));
    }
    let agg = aggregate(&inputs).map_err(|e| fail(Exit::Usage, e))?;
    print!("{}", agg.to_table());
    if let Some(path) = &args.out {
        write(path, &(serde_json::to_string_pretty(&agg).expect("aggregates serialise") + "\n"))?;
    }
    Ok(())
}

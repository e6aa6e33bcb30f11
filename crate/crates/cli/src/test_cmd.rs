use std::path::PathBuf;

use clap::Args;
use fsim_core::verify::{load_suite, run_suite};

use crate::util::{fail, load_program, write, CmdResult, Exit, OrExit};

#[derive(Args)]
pub struct TestArgs {
    pub program: PathBuf,
    pub suite: PathBuf,
    /// Where to write the JSON report.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: TestArgs) -> CmdResult {
    let p = load_program(&args.program)?;
    let tests = load_suite(&args.suite).or_exit(Exit::Validation)?;
    let report = run_suite(&p, &tests);
    print!("{}", report.to_table());
    if let Some(path) = &args.out {
        write(path, &report.to_json())?;
    }
    if report.failed + report.errors > 0 {
        let names: Vec<&str> = report.tests.iter().filter(|t| t.outcome.label() != "PASS").map(|t| t.name.as_str()).collect();
        Err(fail(Exit::TestFailures, format!("{} of {} test(s) did not pass: {}", report.failed + report.errors, report.total, names.join(", "))))
    } else {
        Ok(())
    }
}

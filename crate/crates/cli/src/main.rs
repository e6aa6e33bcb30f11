//! `fsim`: check, run, play, synthesise, test, train and evaluate
//! factored-POMDP simulations.

mod check;
mod play;
mod report;
mod rl_cmd;
mod run;
mod synth;
mod test_cmd;
mod util;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use util::Exit;

#[derive(Parser)]
#[command(name = "fsim", version, about = "Build, check and evaluate factored-POMDP simulations")]
struct Cli {
    /// More logging; repeat for more detail.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate programs, printing diagnostics.
    Check(check::CheckArgs),
    /// Run one episode and write its trace as JSON.
    Run(run::RunArgs),
    /// Play a program in the terminal.
    Play(play::PlayArgs),
    /// Synthesise a program from a text specification.
    Synth(synth::SynthArgs),
    /// Run a system-test suite against a program.
    Test(test_cmd::TestArgs),
    /// Train a tabular Q-learning policy.
    Train(rl_cmd::TrainArgs),
    /// Score a policy on a reference program, normalised against baselines.
    Eval(rl_cmd::EvalArgs),
    /// Aggregate transcripts and suite reports into one table.
    Report(report::ReportArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(Exit::Usage as u8) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Check(a) => check::run(a),
        Command::Run(a) => run::run(a),
        Command::Play(a) => play::run(a),
        Command::Synth(a) => synth::run(a),
        Command::Test(a) => test_cmd::run(a),
        Command::Train(a) => rl_cmd::run_train(a),
        Command::Eval(a) => rl_cmd::run_eval(a),
        Command::Report(a) => report::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.exit as u8)
        }
    }
}

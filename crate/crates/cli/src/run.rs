use std::path::PathBuf;

use clap::{Args, ValueEnum};
use fsim_core::ir::NOOP;
use fsim_core::rng::{derive_seed, StreamChooser};
use fsim_core::runtime::run_episode;

use crate::util::{fail, load_program, write, CmdResult, Exit, OrExit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PolicyKind {
    /// Uniformly random actions.
    Random,
    /// Always NOOP.
    Noop,
    /// The actions given with `--actions`, then NOOP.
    Script,
}

#[derive(Args)]
pub struct RunArgs {
    pub file: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = PolicyKind::Random)]
    pub policy: PolicyKind,
    /// Comma-separated actions for `--policy script`; `ACTION*N` repeats.
    #[arg(long)]
    pub actions: Option<String>,
    /// Where to write the trace; stdout when absent.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

fn expand_script(s: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('*') {
            Some((a, n)) => {
                let n: usize = n.trim().parse().map_err(|e| format!("bad repeat count in `{part}`: {e}"))?;
                out.extend(std::iter::repeat_n(a.trim().to_string(), n));
            }
            None => out.push(part.to_string()),
        }
    }
    Ok(out)
}

pub fn run(args: RunArgs) -> CmdResult {
    let p = load_program(&args.file)?;
    let script = match (&args.policy, &args.actions) {
        (PolicyKind::Script, Some(s)) => expand_script(s).map_err(|e| fail(Exit::Usage, e))?,
        (PolicyKind::Script, None) => return Err(fail(Exit::Usage, "--policy script needs --actions")),
        (_, Some(_)) => return Err(fail(Exit::Usage, "--actions only applies to --policy script")),
        _ => Vec::new(),
    };
    if let Some(bad) = script.iter().find(|a| !p.actions.contains(a)) {
        return Err(fail(Exit::Usage, format!("`{bad}` is not an action of {} (actions: {})", p.metadata.name, p.actions.join(" "))));
    }
    let mut chooser = StreamChooser::new(derive_seed(args.seed, "run:policy", 0));
    let mut t = 0usize;
    let trace = run_episode(&p, args.seed, &mut |_, _| {
        let a = match args.policy {
            PolicyKind::Random => p.actions[chooser.below(p.actions.len())].clone(),
            PolicyKind::Noop => NOOP.to_string(),
            PolicyKind::Script => script.get(t).cloned().unwrap_or_else(|| NOOP.to_string()),
        };
        t += 1;
        a
    })
    .or_exit(Exit::Validation)?;
    eprintln!("{}: {} steps, total reward {}", p.metadata.name, trace.steps.len(), trace.total_reward);
    let json = trace.to_json() + "\n";
    match &args.out {
        Some(path) => write(path, &json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

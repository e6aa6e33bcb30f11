use std::path::PathBuf;

use clap::Args;
use fsim_core::rl::{baselines, evaluate_zero_shot, filter_envs, train, Agent, Baselines, EvalConfig, Hyperparams, Policy, RandomAgent};

use crate::util::{fail, load_program, read, write, CmdResult, Exit, OrExit};

#[derive(Args)]
pub struct TrainArgs {
    /// Programs to train on, visited round-robin by episode.
    #[arg(required = true)]
    pub programs: Vec<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200_000)]
    pub steps: u64,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.99)]
    pub gamma: f64,
    /// Random-policy smoke test length per seed; programs that fail it are
    /// skipped. 0 disables the check.
    #[arg(long, default_value_t = 1000)]
    pub filter_steps: u64,
    #[arg(short, long, default_value = "policy.json")]
    pub out: PathBuf,
    /// Per-episode learning curve as CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

pub fn run_train(args: TrainArgs) -> CmdResult {
    let programs = args.programs.iter().map(|p| load_program(p)).collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<_> = programs.iter().collect();
    let refs = if args.filter_steps > 0 {
        let report = filter_envs(&refs, &[0, 1, 2], args.filter_steps);
        for (i, why) in &report.rejected {
            eprintln!("skipping {}: {why}", args.programs[*i].display());
        }
        report.kept.iter().map(|&i| refs[i]).collect()
    } else {
        refs
    };
    if refs.is_empty() {
        return Err(fail(Exit::Validation, "no program passed the runtime check"));
    }
    let hp = Hyperparams { alpha: args.alpha, gamma: args.gamma, total_steps: args.steps, ..Hyperparams::default() };
    let (policy, log) = train(&refs, &hp, args.seed).or_exit(Exit::Validation)?;
    eprintln!("trained on {} program(s): {} episodes, {} table entries", refs.len(), log.episodes.len(), policy.q.len());
    write(&args.out, &(policy.to_json() + "\n"))?;
    if let Some(path) = &args.log {
        write(path, &log.to_csv(100))?;
    }
    Ok(())
}

#[derive(Args)]
pub struct EvalArgs {
    /// Held-out program the scores are measured on.
    #[arg(long)]
    pub reference: PathBuf,
    /// Trained policy to evaluate.
    #[arg(long, conflicts_with = "random", required_unless_present = "random")]
    pub policy: Option<PathBuf>,
    /// Evaluate an independent uniform random policy instead.
    #[arg(long)]
    pub random: bool,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 50)]
    pub episodes: u64,
    /// Training budget and seed for the reference-trained endpoint.
    #[arg(long, default_value_t = 200_000)]
    pub baseline_steps: u64,
    #[arg(long, default_value_t = 0)]
    pub train_seed: u64,
    /// Reuse previously measured endpoints instead of measuring them.
    #[arg(long)]
    pub baselines: Option<PathBuf>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

pub fn run_eval(args: EvalArgs) -> CmdResult {
    let reference = load_program(&args.reference)?;
    let cfg = EvalConfig { seeds: args.seeds, episodes: args.episodes };
    let mut agent: Box<dyn Agent> = match &args.policy {
        Some(path) => {
            let policy = Policy::from_json(&read(path)?).or_exit(Exit::Usage)?;
            policy.check_program(&reference).or_exit(Exit::Validation)?;
            let missing: Vec<&String> = policy.observed.iter().filter(|id| reference.variable(id).is_none()).collect();
            if !missing.is_empty() {
                log::warn!("{} of the policy's observed variables are absent from the reference: {missing:?}", missing.len());
            }
            Box::new(policy)
        }
        None => Box::new(RandomAgent { actions: reference.actions.len(), stream: "eval:random".into() }),
    };
    let b: Baselines = match &args.baselines {
        Some(path) => serde_json::from_str(&read(path)?).or_exit(Exit::Usage)?,
        None => {
            let hp = Hyperparams { total_steps: args.baseline_steps, ..Hyperparams::default() };
            baselines(&reference, &hp, args.train_seed, &cfg).or_exit(Exit::Validation)?.0
        }
    };
    let report = evaluate_zero_shot(agent.as_mut(), &reference, &cfg, &b).or_exit(Exit::Validation)?;
    print!("{}", report.to_table());
    if let Some(path) = &args.out {
        write(path, &(report.to_json() + "\n"))?;
    }
    Ok(())
}

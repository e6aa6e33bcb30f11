use std::path::{Path, PathBuf};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use clap::{ArgGroup, Args};
use fsim_core::dsl::format_program;
use fsim_synth::cassette::{Cassette, Recorder, ReplayMode, ReplayProvider, ScriptProvider};
use fsim_synth::live::{LiveConfig, LiveProvider, ENV_MODEL};
use fsim_synth::{Provider, SynthConfig, SynthError, Synthesizer, Templates, Transcript};
use serde::Serialize;

use crate::util::{fail, read, write, CmdResult, Exit, Failure, OrExit};

#[derive(Args)]
#[command(group(ArgGroup::new("provider").required(true).args(["replay", "script", "live"])))]
pub struct SynthArgs {
    /// Text specification of the simulation.
    pub spec: PathBuf,
    /// Replay responses from a cassette.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Match cassette records by position only, ignoring fingerprints.
    #[arg(long, requires = "replay")]
    pub lenient: bool,
    /// Answer from a hand-written response script.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Call the HTTP endpoint named by FSIM_ENDPOINT.
    #[arg(long)]
    pub live: bool,
    /// Also write the exchanges of this run as a cassette.
    #[arg(long)]
    pub record: Option<PathBuf>,
    #[arg(short, long, default_value = "synth-out")]
    pub out: PathBuf,
    /// Independent runs; outputs go to `<out>/job-<i>`.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value_t = 3)]
    pub max_attempts: u32,
    #[arg(long, default_value_t = 1)]
    pub plan_samples: u32,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 2048)]
    pub max_tokens: u32,
    /// Model name sent to the provider; defaults to FSIM_MODEL.
    #[arg(long)]
    pub model: Option<String>,
    /// Directory of prompt templates replacing the built-in set.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,
    #[arg(long, default_value_t = 2)]
    pub retries: u32,
}

#[derive(Serialize)]
struct RunInfo {
    started_unix_ms: u128,
    elapsed_ms: u128,
    jobs: Vec<JobInfo>,
}

#[derive(Serialize)]
struct JobInfo {
    job: usize,
    elapsed_ms: u128,
    status: String,
}

enum Source {
    Replay(Cassette, ReplayMode),
    Script(String),
    Live(LiveProvider),
}

impl Source {
    fn provider(&self) -> Result<Box<dyn Provider + '_>, Failure> {
        Ok(match self {
            Source::Replay(c, mode) => Box::new(ReplayProvider::new(c.clone(), *mode)),
            Source::Script(text) => Box::new(ScriptProvider::parse(text).or_exit(Exit::Usage)?),
            Source::Live(p) => Box::new(p),
        })
    }
}

fn exit_for(e: &SynthError) -> Exit {
    match e {
        SynthError::Provider(_) => Exit::Provider,
        SynthError::Config(_) => Exit::Usage,
        _ => Exit::Synthesis,
    }
}

struct JobOutcome {
    status: Result<(), (Exit, String)>,
    elapsed: Duration,
}

fn run_job(source: &Source, cfg: &SynthConfig, spec: &str, dir: &Path, record: Option<&Path>) -> Result<JobOutcome, Failure> {
    let started = Instant::now();
    let provider = source.provider()?;
    let recorder = Recorder::new(provider);
    let result = Synthesizer::new(&recorder, cfg).synthesize(spec);
    let (transcript, status): (Transcript, _) = match result {
        Ok((m, t)) => {
            write(&dir.join("program.fsim"), &format_program(&m))?;
            (t, Ok(()))
        }
        Err(f) => {
            let exit = exit_for(&f.error);
            (*f.transcript, Err((exit, f.error.to_string())))
        }
    };
    write(&dir.join("transcript.json"), &transcript.to_json())?;
    if let Some(path) = record {
        write(path, &recorder.cassette().to_json())?;
    }
    Ok(JobOutcome { status, elapsed: started.elapsed() })
}

pub fn run(args: SynthArgs) -> CmdResult {
    if args.jobs == 0 {
        return Err(fail(Exit::Usage, "--jobs must be at least 1"));
    }
    if args.jobs > 1 && args.record.is_some() {
        return Err(fail(Exit::Usage, "--record takes a single job"));
    }
    let spec = read(&args.spec)?;
    let templates = match &args.templates {
        Some(dir) => Templates::from_dir(dir).or_exit(Exit::Usage)?,
        None => Templates::builtin(),
    };
    let source = if let Some(path) = &args.replay {
        let mode = if args.lenient { ReplayMode::Lenient } else { ReplayMode::Strict };
        Source::Replay(Cassette::load(path).or_exit(Exit::Usage)?, mode)
    } else if let Some(path) = &args.script {
        Source::Script(read(path)?)
    } else {
        let mut live = LiveConfig::from_env().or_exit(Exit::Provider)?;
        live.timeout = Duration::from_secs(args.timeout_secs);
        live.retries = args.retries;
        Source::Live(LiveProvider::new(live))
    };
    let model = args.model.clone().or_else(|| std::env::var(ENV_MODEL).ok()).unwrap_or_else(|| "default".into());
    let cfg = SynthConfig {
        model,
        temperature: args.temperature,
        max_tokens: args.max_tokens,
        max_attempts: args.max_attempts,
        plan_samples: args.plan_samples,
        templates,
    };

    let started_at = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
    let started = Instant::now();
    let dirs: Vec<PathBuf> = if args.jobs == 1 { vec![args.out.clone()] } else { (0..args.jobs).map(|i| args.out.join(format!("job-{i}"))).collect() };
    let outcomes: Vec<Result<JobOutcome, Failure>> = std::thread::scope(|s| {
        let handles: Vec<_> = dirs.iter().map(|dir| s.spawn(|| run_job(&source, &cfg, &spec, dir, args.record.as_deref()))).collect();
        handles.into_iter().map(|h| h.join().expect("synthesis job panicked")).collect()
    });

    let mut info = RunInfo { started_unix_ms: started_at, elapsed_ms: 0, jobs: Vec::new() };
    let mut worst: Option<(Exit, String)> = None;
    for (i, outcome) in outcomes.into_iter().enumerate() {
        let outcome = outcome?;
        let status = match &outcome.status {
            Ok(()) => "ok".to_string(),
            Err((exit, message)) => {
                eprintln!("job {i}: {message}");
                if worst.as_ref().is_none_or(|(w, _)| (*exit as u8) > (*w as u8)) {
                    worst = Some((*exit, message.clone()));
                }
                format!("failed: {message}")
            }
        };
        println!("job {i}: {status} -> {}", dirs[i].display());
        info.jobs.push(JobInfo { job: i, elapsed_ms: outcome.elapsed.as_millis(), status });
    }
    info.elapsed_ms = started.elapsed().as_millis();
    write(&args.out.join("run-info.json"), &(serde_json::to_string_pretty(&info).expect("run info serialises") + "\n"))?;
    match worst {
        Some((exit, message)) => Err(fail(exit, message)),
        None => Ok(()),
    }
}

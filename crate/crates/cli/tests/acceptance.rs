//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Tolerances are fixed below.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use fsim_core::diag::DiagCode;
use fsim_core::dsl::{format_program, load};
use fsim_core::flatten::flatten_enumerate;
use fsim_core::ir::FactoredPomdp;
use fsim_core::rl::{baselines, evaluate_zero_shot, train, EvalConfig, Hyperparams, RandomAgent};
use fsim_core::rng::derive_seed;
use fsim_core::runtime::{step_distribution, Episode, RenderConfig, SimState};
use fsim_core::testgen::{random_pomdp, scope_mutants, GenConfig};
use fsim_core::verify::{load_suite, run_suite};
use fsim_synth::transcript::StepStatus;
use fsim_synth::{
    synthesize, Cassette, LiveConfig, LiveProvider, Purpose, Recorder, ReplayMode, ReplayProvider, SynthConfig, SynthError,
    TokenCounts, Transcript,
};

const FLAT_TOLERANCE: f64 = 1e-12;
const FLAT_PROGRAMS: u64 = 50;
const FLAT_BUDGET_SECS: f64 = 10.0;
const SCOPE_MUTANTS: usize = 200;
const REWARD_STEPS: usize = 1000;
const ROUND_TRIP_PROGRAMS: u64 = 500;
const REPLAY_RUNS: usize = 3;
const MAX_ATTEMPTS: u32 = 3;
const MIN_MUTANTS: usize = 6;
const RANDOM_TOLERANCE: f64 = 0.05;
const TRANSFER_SIGMAS: f64 = 3.0;
const RL_BUDGET_SECS: f64 = 300.0;
const RL_TRAIN_STEPS: u64 = 200_000;
const Q_TOLERANCE: f64 = 1e-6;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn read(rel: &str) -> String {
    std::fs::read_to_string(fixtures().join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

fn program(rel: &str) -> FactoredPomdp {
    load(&read(rel)).unwrap_or_else(|d| panic!("{rel}: {d:?}"))
}

fn fsim_files(dir: &str) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(fixtures().join(dir))
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".fsim"))
        .map(|n| if dir.is_empty() { n } else { format!("{dir}/{n}") })
        .collect();
    names.sort();
    names
}

fn shipped_fixtures() -> Vec<String> {
    ["", "mutants", "rl", "synth/catcher_fast", "synth/catcher_slow", "synth/catcher_wide"].iter().flat_map(|d| fsim_files(d)).collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn replay(name: &str) -> Result<(FactoredPomdp, Transcript), fsim_synth::SynthFailure> {
    let cassette = Cassette::parse(&read(&format!("synth/{name}/cassette.json"))).unwrap();
    let provider = ReplayProvider::new(cassette, ReplayMode::Strict);
    synthesize(&read(&format!("synth/{name}/spec.txt")), &provider, &SynthConfig::default())
}

fn replay_ok(name: &str) -> Result<(FactoredPomdp, Transcript), String> {
    replay(name).map_err(|f| format!("{name}: {}", f.error))
}

fn flat_equivalence() -> Check {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    let mut entries = 0usize;
    for seed in 0..FLAT_PROGRAMS {
        let p = random_pomdp(seed, &GenConfig::finite_small());
        ensure(p.variables.len() <= 4 && p.actions.len() <= 3 && p.factors.len() <= 6, || format!("program {seed} exceeds the size limits"))?;
        let t = flatten_enumerate(&p).map_err(|e| format!("program {seed}: {e}"))?;
        for s in 0..t.num_states() {
            let state = SimState { values: t.state_map(s), step_count: 0, terminated: false };
            for (a, action) in p.actions.iter().enumerate() {
                let mut runtime: BTreeMap<usize, f64> = BTreeMap::new();
                for (next, q) in step_distribution(&p, &state, action).map_err(|e| format!("program {seed}: {e}"))? {
                    let idx = t.state_index(&next.values).ok_or_else(|| format!("program {seed}: next state outside the table"))?;
                    *runtime.entry(idx).or_default() += q;
                }
                let row: BTreeMap<usize, f64> = t.row(s, a).iter().copied().collect();
                for k in runtime.keys().chain(row.keys()).collect::<BTreeSet<_>>() {
                    worst = worst.max((runtime.get(k).copied().unwrap_or(0.0) - row.get(k).copied().unwrap_or(0.0)).abs());
                    entries += 1;
                }
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(worst <= FLAT_TOLERANCE, || format!("max deviation {worst:e} > {FLAT_TOLERANCE:e}"))?;
    ensure(secs < FLAT_BUDGET_SECS, || format!("took {secs:.2}s"))?;
    Ok(format!("{FLAT_PROGRAMS} programs, {entries} entries, max deviation {worst:e}, {secs:.2}s"))
}

fn codes(src: &str) -> BTreeSet<DiagCode> {
    match load(src) {
        Ok(_) => BTreeSet::new(),
        Err(d) => d.into_iter().map(|x| x.code).collect(),
    }
}

fn scope_soundness() -> Check {
    for name in shipped_fixtures() {
        let c = codes(&read(&name));
        ensure(c.is_empty(), || format!("{name} falsely rejected with {c:?}"))?;
    }
    let refs = fsim_files("");
    let per = SCOPE_MUTANTS.div_ceil(refs.len());
    let mut total = 0;
    for (i, name) in refs.iter().enumerate() {
        let p = program(name);
        let mutants = scope_mutants(&p, per, i as u64);
        ensure(mutants.len() == per, || format!("{name}: only {} mutants generated", mutants.len()))?;
        for m in mutants {
            let got = codes(&format_program(&m.pomdp));
            let want = BTreeSet::from([m.expected_code()]);
            ensure(got == want, || format!("{name}: {:?} in {} on {}: got {got:?}", m.kind, m.factor, m.variable))?;
            total += 1;
        }
    }
    ensure(total >= SCOPE_MUTANTS, || format!("only {total} mutants"))?;
    Ok(format!("{total} mutants rejected with the expected code, {} fixtures accepted", shipped_fixtures().len()))
}

fn reward_identity() -> Check {
    let programs: Vec<(String, FactoredPomdp)> = fsim_files("").into_iter().chain(fsim_files("rl")).map(|n| (n.clone(), program(&n))).collect();
    let score = |p: &FactoredPomdp, e: &Episode| e.state().get(&p.score_id).and_then(|v| v.as_f64()).expect("numeric score");
    let (mut steps, mut episodes, mut nonzero) = (0usize, 0usize, 0usize);
    let mut seed = 0u64;
    while steps < REWARD_STEPS {
        for (name, p) in &programs {
            let mut e = Episode::new(p, seed, RenderConfig::shapes_only()).map_err(|err| format!("{name}: {err}"))?;
            let initial = score(p, &e);
            let mut ret = 0.0;
            let mut k = 0;
            while !e.done() && k < 100 {
                let a = &p.actions[(derive_seed(seed, "acceptance:policy", k) % p.actions.len() as u64) as usize];
                let before = score(p, &e);
                let r = e.step(a).map_err(|err| format!("{name}: {err}"))?;
                ensure(r.reward == score(p, &e) - before, || format!("{name} seed {seed} step {k}: reward {} vs delta {}", r.reward, score(p, &e) - before))?;
                nonzero += usize::from(r.reward != 0.0);
                ret += r.reward;
                k += 1;
            }
            ensure(ret == score(p, &e) - initial, || format!("{name} seed {seed}: return {ret} vs {}", score(p, &e) - initial))?;
            steps += k as usize;
            episodes += 1;
        }
        seed += 1;
    }
    ensure(nonzero > 0, || "no step paid a reward".into())?;
    Ok(format!("{steps} steps over {episodes} episodes, {nonzero} rewarded, all exact"))
}

fn round_trip() -> Check {
    let check = |label: &str, p: &FactoredPomdp| -> Result<(), String> {
        let text = format_program(p);
        let back = load(&text).map_err(|d| format!("{label}: reparse failed: {d:?}"))?;
        ensure(&back == p, || format!("{label}: structure changed"))?;
        ensure(format_program(&back) == text, || format!("{label}: formatter not idempotent"))
    };
    let names = shipped_fixtures();
    for name in &names {
        let p = program(name);
        check(name, &p)?;
        ensure(format_program(&p) == read(name), || format!("{name} is not canonical"))?;
    }
    for seed in 0..ROUND_TRIP_PROGRAMS {
        let cfg = if seed % 2 == 0 { GenConfig::broad() } else { GenConfig::finite_small() };
        check(&format!("generated program {seed}"), &random_pomdp(seed, &cfg))?;
    }
    Ok(format!("{} fixtures and {ROUND_TRIP_PROGRAMS} generated programs", names.len()))
}

fn replay_determinism() -> Check {
    let mut scanned = 0;
    for name in ["catcher", "pong"] {
        let mut seen: Option<(String, String)> = None;
        for _ in 0..REPLAY_RUNS {
            let (m, t) = replay_ok(name)?;
            let out = (format_program(&m), t.to_json());
            if let Some(first) = &seen {
                ensure(*first == out, || format!("{name}: runs differ"))?;
            }
            let violations = t.context_violations().map_err(|e| e.to_string())?;
            ensure(violations.is_empty(), || format!("{name}: {violations:?}"))?;
            scanned += t.exchanges().len();
            seen = Some(out);
        }
        let (text, _) = seen.unwrap();
        ensure(text == read(&format!("{name}.fsim")), || format!("{name}: differs from {name}.fsim"))?;
    }
    Ok(format!("{REPLAY_RUNS} identical runs each, {scanned} prompts scanned, no out-of-context factor"))
}

fn repair_contract() -> Check {
    let (_, t) = replay_ok("repair")?;
    let attempts: Vec<u32> = t.steps[0].exchanges.iter().filter(|e| e.purpose == Purpose::Controller).map(|e| e.attempt).collect();
    ensure(attempts == [1, 2, 3], || format!("repair run recorded controller attempts {attempts:?}"))?;
    let err = replay("all_invalid").err().ok_or("all_invalid unexpectedly succeeded")?;
    let SynthError::StepFailed { step, attempts, .. } = &err.error else {
        return Err(format!("all_invalid failed with {}", err.error));
    };
    ensure(attempts.len() == MAX_ATTEMPTS as usize, || format!("{} attempts recorded", attempts.len()))?;
    let t = &err.transcript;
    ensure(t.steps.len() == *step && t.steps[0].status == StepStatus::Completed && t.steps[step - 1].status == StepStatus::Failed, || {
        "partial transcript does not show the completed prefix and the failed step".into()
    })?;
    t.rebuild().map_err(|e| format!("partial transcript does not rebuild: {e}"))?;
    Ok(format!("3 attempts then success; StepFailed at step {step} after {MAX_ATTEMPTS} attempts with partial transcript"))
}

fn harness_sensitivity() -> Check {
    let mut detail = Vec::new();
    for game in ["catcher", "pong"] {
        let tests = load_suite(&fixtures().join(format!("suites/{game}.json"))).map_err(|e| e.to_string())?;
        let r = run_suite(&program(&format!("{game}.fsim")), &tests);
        ensure(r.pass_rate == Some(1.0), || format!("{game}: pass rate {:?}\n{}", r.pass_rate, r.to_table()))?;
        ensure(r.to_json() == run_suite(&program(&format!("{game}.fsim")), &tests).to_json(), || format!("{game}: report not deterministic"))?;
    }
    let mutants = fsim_files("mutants");
    ensure(mutants.len() >= MIN_MUTANTS, || format!("only {} mutants shipped", mutants.len()))?;
    for name in &mutants {
        let game = if name.contains("/catcher") { "catcher" } else { "pong" };
        let tests = load_suite(&fixtures().join(format!("suites/{game}.json"))).map_err(|e| e.to_string())?;
        let p = program(name);
        let r = run_suite(&p, &tests);
        let failed: Vec<&str> = r.tests.iter().filter(|t| t.outcome.label() == "FAIL").map(|t| t.name.as_str()).collect();
        ensure(!failed.is_empty() && r.pass_rate < Some(1.0), || format!("{name} passes its suite"))?;
        ensure(r.to_json() == run_suite(&p, &tests).to_json(), || format!("{name}: report not deterministic"))?;
        detail.push(failed.len());
    }
    Ok(format!("references 1.0; {} mutants each fail >= 1 named test (fewest {})", mutants.len(), detail.iter().min().unwrap()))
}

fn rl_normalization() -> Check {
    let started = Instant::now();
    let reference = program("catcher.fsim");
    let cfg = EvalConfig { seeds: vec![0, 1, 2], episodes: 50 };
    let hp = Hyperparams { total_steps: RL_TRAIN_STEPS, ..Hyperparams::default() };
    let (b, mut reference_policy) = baselines(&reference, &hp, 0, &cfg).map_err(|e| e.to_string())?;
    let own = evaluate_zero_shot(&mut reference_policy, &reference, &cfg, &b).map_err(|e| e.to_string())?;
    ensure((own.normalized - 1.0).abs() < 1e-9, || format!("reference-trained policy scores {}", own.normalized))?;

    let mut random = RandomAgent { actions: reference.actions.len(), stream: "acceptance:random".into() };
    let r = evaluate_zero_shot(&mut random, &reference, &cfg, &b).map_err(|e| e.to_string())?;
    ensure(r.normalized.abs() <= RANDOM_TOLERANCE, || format!("random policy scores {:.4} (se {:.4})", r.normalized, r.normalized_std_error))?;

    let mut variants = Vec::new();
    for name in ["catcher_fast", "catcher_slow", "catcher_wide"] {
        variants.push(replay_ok(name)?.0);
    }
    let refs: Vec<&FactoredPomdp> = variants.iter().collect();
    let (mut policy, _) = train(&refs, &hp, 0).map_err(|e| e.to_string())?;
    let t = evaluate_zero_shot(&mut policy, &reference, &cfg, &b).map_err(|e| e.to_string())?;
    let lower = t.normalized - TRANSFER_SIGMAS * t.normalized_std_error;
    ensure(lower > 0.0, || format!("transfer {:.3} ± {:.3} is not > 0 at 3σ", t.normalized, t.normalized_std_error))?;
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < RL_BUDGET_SECS, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "random {:.3} ± {:.3}, reference 1.0, transfer {:.3} ± {:.3} (raw {:.2}, random {:.2}, reference {:.2}), {secs:.1}s",
        r.normalized, r.normalized_std_error, t.normalized, t.normalized_std_error, t.raw_mean, b.random_mean, b.reference_mean
    ))
}

/// Answers each connection with the next canned completion and its usage.
fn stand_in_server(replies: Vec<(String, TokenCounts)>) -> (String, std::thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        for (text, tokens) in replies {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line.trim_end().is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        length = v.trim().parse().unwrap();
                    }
                }
            }
            reader.read_exact(&mut vec![0; length]).unwrap();
            let body = serde_json::json!({
                "choices": [{"message": {"content": text}}],
                "usage": {"prompt_tokens": tokens.prompt, "completion_tokens": tokens.completion},
            })
            .to_string();
            write!(stream, "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}", body.len()).unwrap();
        }
    });
    (url, handle)
}

fn exchange_sum(t: &Transcript) -> TokenCounts {
    let mut sum = TokenCounts::default();
    for e in t.plan_exchanges.iter().chain(t.steps.iter().flat_map(|s| &s.exchanges)) {
        sum += e.tokens;
    }
    sum
}

fn token_accounting() -> Check {
    let mut runs = 0;
    for name in ["catcher", "pong", "repair"] {
        let (_, t) = replay_ok(name)?;
        let cassette = Cassette::parse(&read(&format!("synth/{name}/cassette.json"))).unwrap();
        ensure(t.token_totals == exchange_sum(&t) && t.token_totals == cassette.token_total(), || format!("{name}: totals disagree"))?;
        runs += 1;
    }
    let failed = replay("all_invalid").err().ok_or("all_invalid unexpectedly succeeded")?;
    ensure(failed.transcript.token_totals == exchange_sum(&failed.transcript), || "partial transcript totals disagree".into())?;

    let scripted = Cassette::parse(&read("synth/catcher/cassette.json")).unwrap();
    let replies: Vec<(String, TokenCounts)> = scripted
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.response_text.clone(), TokenCounts { prompt: 1000 + 13 * i as u64, completion: 50 + 7 * i as u64 }))
        .collect();
    let served = replies.iter().fold(TokenCounts::default(), |mut acc, (_, t)| {
        acc += *t;
        acc
    });
    let (url, server) = stand_in_server(replies);
    let live = LiveProvider::new(LiveConfig { timeout: Duration::from_secs(30), retries: 0, ..LiveConfig::new(url) });
    let rec = Recorder::new(live);
    let (_, t) = synthesize(&read("synth/catcher/spec.txt"), &rec, &SynthConfig::default()).map_err(|f| format!("live run: {}", f.error))?;
    server.join().map_err(|_| "stand-in server panicked")?;
    ensure(t.token_totals == served && exchange_sum(&t) == served, || format!("live run: {:?} vs served {served:?}", t.token_totals))?;
    let recorded = rec.cassette();
    ensure(recorded.token_total() == served, || "recorded cassette totals disagree".into())?;
    let provider = ReplayProvider::new(recorded, ReplayMode::Strict);
    let (_, again) = synthesize(&read("synth/catcher/spec.txt"), &provider, &SynthConfig::default()).map_err(|f| format!("replay of live run: {}", f.error))?;
    ensure(again.token_totals == served && exchange_sum(&again) == served, || "replayed live run totals disagree".into())?;
    Ok(format!("{runs} replayed runs, 1 partial run, 1 live-recorded run and its replay ({} + {} tokens)", served.prompt, served.completion))
}

/// Value iteration over the chain's hand-written transition and reward.
fn chain_fixed_point(gamma: f64) -> [[f64; 2]; 2] {
    let next = |s: usize, a: usize| if a == 1 { 1 - s } else { s };
    let mut q = [[0.0f64; 2]; 2];
    for _ in 0..5000 {
        let mut n = [[0.0; 2]; 2];
        for (s, row) in n.iter_mut().enumerate() {
            for (a, cell) in row.iter_mut().enumerate() {
                let s2 = next(s, a);
                *cell = if s2 == 1 { 1.0 } else { 0.0 } + gamma * q[s2][0].max(q[s2][1]);
            }
        }
        q = n;
    }
    q
}

fn tabular_oracle() -> Check {
    let p = program("rl/chain.fsim");
    let hp = Hyperparams { gamma: 0.9, ..Hyperparams::default() };
    let (policy, _) = train(&[&p], &hp, 0).map_err(|e| e.to_string())?;
    let oracle = chain_fixed_point(0.9);
    let mut worst: f64 = 0.0;
    for (s, row) in oracle.iter().enumerate() {
        let learned = policy.values(&[s as u16]);
        for a in 0..2 {
            worst = worst.max((learned[a] - row[a]).abs());
        }
    }
    ensure(worst <= Q_TOLERANCE, || format!("max |Q - Q*| = {worst:e}"))?;
    Ok(format!("max |Q - Q*| = {worst:e}"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("factored/flat equivalence", flat_equivalence),
        ("scope soundness", scope_soundness),
        ("reward identity", reward_identity),
        ("DSL round-trip", round_trip),
        ("replay synthesis determinism", replay_determinism),
        ("repair-loop contract", repair_contract),
        ("system-test harness sensitivity", harness_sensitivity),
        ("RL normalization endpoints", rl_normalization),
        ("token accounting", token_accounting),
        ("tabular-RL oracle", tabular_oracle),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(why) => {
                failures += 1;
                println!("FAIL {:>2} {name}: {why} [{secs:.1}s]", i + 1);
            }
        }
    }
    std::io::stdout().flush().unwrap();
    if failures > 0 {
        std::process::exit(1);
    }
}

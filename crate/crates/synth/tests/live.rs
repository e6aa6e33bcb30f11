//! The HTTP provider against a local stand-in server.

mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use common::{cassette, ok, scenario};
use fsim_synth::{
    synthesize, LiveConfig, LiveProvider, Message, Provider, ProviderError, ProviderRequest, Purpose, Recorder, ReplayMode,
    ReplayProvider, SynthConfig, TokenCounts,
};
use serde_json::{json, Value};

#[derive(Default)]
struct Seen {
    bodies: Vec<Value>,
    auth: Vec<Option<String>>,
}

/// Serves one canned reply per connection: `(status, body)`.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Seen>>, JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Seen::default()));
    let log = seen.clone();
    let handle = std::thread::spawn(move || {
        for (status, body) in replies {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            let mut auth = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (name, value) = line.split_once(':').unwrap_or((line, ""));
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => length = value.trim().parse().unwrap(),
                    "authorization" => auth = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            {
                let mut s = log.lock().unwrap();
                s.bodies.push(serde_json::from_slice(&buf).unwrap());
                s.auth.push(auth);
            }
            let head = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                body.len()
            );
            stream.write_all(head.as_bytes()).unwrap();
            stream.write_all(body.as_bytes()).unwrap();
        }
    });
    (url, seen, handle)
}

fn completion(text: &str, prompt: u64, completion: u64) -> String {
    json!({
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": prompt, "completion_tokens": completion},
    })
    .to_string()
}

fn quick(url: &str) -> LiveConfig {
    LiveConfig { timeout: Duration::from_secs(10), retries: 1, backoff: Duration::from_millis(10), ..LiveConfig::new(url) }
}

#[test]
fn recorded_live_run_accounts_tokens_and_replays() {
    let scripted = cassette("repair");
    let replies: Vec<(u16, String)> =
        scripted.records.iter().enumerate().map(|(i, r)| (200, completion(&r.response_text, 100 + i as u64, 7 * i as u64 + 1))).collect();
    let n = replies.len() as u64;
    let (url, seen, server) = serve(replies);
    let mut cfg = quick(&url);
    cfg.api_key = Some("sk-test".into());
    let rec = Recorder::new(LiveProvider::new(cfg));
    let synth = SynthConfig { model: "local-model".into(), ..SynthConfig::default() };
    let (m, t) = ok(synthesize(&scenario("repair", "spec.txt"), &rec, &synth));
    server.join().unwrap();

    let expected = TokenCounts { prompt: (0..n).map(|i| 100 + i).sum(), completion: (0..n).map(|i| 7 * i + 1).sum() };
    assert_eq!(t.token_totals, expected);
    assert_eq!(t.recount_tokens(), expected);
    let recorded = rec.cassette();
    assert_eq!(recorded.token_total(), expected);

    let seen = seen.lock().unwrap();
    assert_eq!(seen.bodies.len() as u64, n);
    assert_eq!(seen.bodies[0]["model"], "local-model");
    assert_eq!(seen.bodies[0]["messages"][0]["role"], "system");
    assert!(seen.auth.iter().all(|a| a.as_deref() == Some("Bearer sk-test")));

    // Same prompts as the scripted run, so the fingerprints agree.
    let prints = |c: &fsim_synth::Cassette| c.records.iter().map(|r| r.request_fingerprint.clone()).collect::<Vec<_>>();
    assert_eq!(prints(&recorded), prints(&scripted));

    let replayed = ReplayProvider::new(recorded, ReplayMode::Strict);
    let (m2, t2) = ok(synthesize(&scenario("repair", "spec.txt"), &replayed, &synth));
    assert_eq!(m2, m);
    assert_eq!(t2.to_json(), t.to_json());
}

fn request() -> ProviderRequest {
    ProviderRequest { purpose: Purpose::Model, model: "m".into(), messages: vec![Message::user("hi")], temperature: 0.0, max_tokens: 16 }
}

#[test]
fn error_statuses_are_not_retried() {
    let (url, seen, server) = serve(vec![(500, "{\"error\": \"boom\"}".into())]);
    let err = LiveProvider::new(quick(&url)).complete(&request()).unwrap_err();
    server.join().unwrap();
    assert!(matches!(&err, ProviderError::Status { status: 500, body } if body.contains("boom")), "{err}");
    assert_eq!(seen.lock().unwrap().bodies.len(), 1);
}

#[test]
fn transport_failures_are_retried_then_reported() {
    // Bind and drop to get a port nothing listens on.
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = LiveProvider::new(quick(&format!("http://127.0.0.1:{port}/"))).complete(&request()).unwrap_err();
    assert!(matches!(err, ProviderError::Transport { attempts: 2, .. }), "{err}");
}

#[test]
fn malformed_bodies_are_bad_responses() {
    let (url, _, server) = serve(vec![(200, "{\"choices\": []}".into()), (200, completion("x", 1, 1).replace("usage", "other"))]);
    let p = LiveProvider::new(quick(&url));
    assert!(matches!(p.complete(&request()), Err(ProviderError::BadResponse(_))));
    assert!(matches!(p.complete(&request()), Err(ProviderError::BadResponse(_))));
    server.join().unwrap();
}

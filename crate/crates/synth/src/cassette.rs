//! Recorded provider exchanges for offline, deterministic runs.
//!
//! A cassette is a JSON document:
//!
//! ```json
//! {"format": "fsim-cassette/1",
//!  "records": [{"purpose": "decompose", "request_fingerprint": "9f2c…",
//!               "response_text": "{…}", "token_counts": {"prompt": 310, "completion": 95}}]}
//! ```
//!
//! Replay hands out responses in order. Strict replay also requires each
//! request's fingerprint to equal the recorded one.

use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::provider::{estimate_tokens, Provider, ProviderError, ProviderRequest, ProviderResponse, Purpose, TokenCounts};

pub const CASSETTE_FORMAT: &str = "fsim-cassette/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CassetteRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purpose: Option<Purpose>,
    pub request_fingerprint: String,
    pub response_text: String,
    pub token_counts: TokenCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cassette {
    pub format: String,
    pub records: Vec<CassetteRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum CassetteError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid cassette: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported cassette format `{0}`")]
    Format(String),
}

impl Cassette {
    pub fn new(records: Vec<CassetteRecord>) -> Self {
        Self { format: CASSETTE_FORMAT.to_string(), records }
    }

    pub fn parse(json: &str) -> Result<Self, CassetteError> {
        let c: Cassette = serde_json::from_str(json)?;
        if c.format != CASSETTE_FORMAT {
            return Err(CassetteError::Format(c.format));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, CassetteError> {
        let text = std::fs::read_to_string(path).map_err(|source| CassetteError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("cassettes serialise");
        s.push('\n');
        s
    }

    pub fn token_total(&self) -> TokenCounts {
        let mut t = TokenCounts::default();
        for r in &self.records {
            t += r.token_counts;
        }
        t
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReplayMode {
    /// Fingerprints must match the recording.
    Strict,
    /// Responses are matched by position alone.
    Lenient,
}

pub struct ReplayProvider {
    cassette: Cassette,
    mode: ReplayMode,
    cursor: Mutex<usize>,
}

impl ReplayProvider {
    pub fn new(cassette: Cassette, mode: ReplayMode) -> Self {
        Self { cassette, mode, cursor: Mutex::new(0) }
    }

    /// Number of records handed out so far.
    pub fn consumed(&self) -> usize {
        *self.cursor.lock().expect("cursor lock")
    }

    pub fn remaining(&self) -> usize {
        self.cassette.records.len() - self.consumed()
    }
}

impl Provider for ReplayProvider {
    fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let mut cursor = self.cursor.lock().expect("cursor lock");
        let index = *cursor;
        let record = self.cassette.records.get(index).ok_or(ProviderError::CassetteExhausted { index })?;
        if self.mode == ReplayMode::Strict {
            let actual = request.fingerprint();
            if actual != record.request_fingerprint {
                return Err(ProviderError::FingerprintMismatch { index, recorded: record.request_fingerprint.clone(), actual });
            }
        }
        *cursor += 1;
        Ok(ProviderResponse { text: record.response_text.clone(), tokens: record.token_counts })
    }
}

/// Wraps a provider and keeps every successful exchange as a cassette record.
pub struct Recorder<P> {
    inner: P,
    records: Mutex<Vec<CassetteRecord>>,
}

impl<P: Provider> Recorder<P> {
    pub fn new(inner: P) -> Self {
        Self { inner, records: Mutex::new(Vec::new()) }
    }

    pub fn cassette(&self) -> Cassette {
        Cassette::new(self.records.lock().expect("records lock").clone())
    }
}

impl<P: Provider> Provider for Recorder<P> {
    fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let response = self.inner.complete(request)?;
        self.records.lock().expect("records lock").push(CassetteRecord {
            purpose: Some(request.purpose),
            request_fingerprint: request.fingerprint(),
            response_text: response.text.clone(),
            token_counts: response.tokens,
        });
        Ok(response)
    }
}

/// Hand-authored responses, used to produce cassettes without a live model.
///
/// The script is plain text split by `=== <purpose>` header lines; each
/// section's trimmed body is one response. Token counts are estimated.
pub struct ScriptProvider {
    entries: Vec<(Purpose, String)>,
    cursor: Mutex<usize>,
}

#[derive(Debug, thiserror::Error)]
#[error("script line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

impl ScriptProvider {
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut entries: Vec<(Purpose, String)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if let Some(header) = line.strip_prefix("===") {
                let name = header.trim();
                let purpose = Purpose::parse(name).ok_or_else(|| ScriptError { line: i + 1, message: format!("unknown purpose `{name}`") })?;
                entries.push((purpose, String::new()));
            } else if let Some((_, body)) = entries.last_mut() {
                body.push_str(line);
                body.push('\n');
            } else if !line.trim().is_empty() {
                return Err(ScriptError { line: i + 1, message: "text before the first `===` header".into() });
            }
        }
        let entries = entries.into_iter().map(|(p, b)| (p, b.trim().to_string())).collect();
        Ok(Self { entries, cursor: Mutex::new(0) })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Provider for ScriptProvider {
    fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let mut cursor = self.cursor.lock().expect("cursor lock");
        let index = *cursor;
        let (purpose, text) = self.entries.get(index).ok_or(ProviderError::CassetteExhausted { index })?;
        if *purpose != request.purpose {
            return Err(ProviderError::ScriptMismatch { index, expected: *purpose, actual: request.purpose });
        }
        *cursor += 1;
        let prompt: u64 = request.messages.iter().map(|m| estimate_tokens(&m.content)).sum();
        Ok(ProviderResponse { text: text.clone(), tokens: TokenCounts { prompt, completion: estimate_tokens(text) } })
    }
}

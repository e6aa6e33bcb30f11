//! The text-completion interface the pipeline talks to.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

/// Which pipeline call produced a request. Not sent over the wire and not
/// part of the fingerprint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Decompose,
    SelectContext,
    Controller,
    Model,
    View,
}

impl Purpose {
    pub const ALL: [Purpose; 5] = [Purpose::Decompose, Purpose::SelectContext, Purpose::Controller, Purpose::Model, Purpose::View];

    pub fn as_str(&self) -> &'static str {
        match self {
            Purpose::Decompose => "decompose",
            Purpose::SelectContext => "select_context",
            Purpose::Controller => "controller",
            Purpose::Model => "model",
            Purpose::View => "view",
        }
    }

    pub fn parse(s: &str) -> Option<Purpose> {
        Purpose::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub purpose: Purpose,
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ProviderRequest {
    /// Hex SHA-256 of the canonical JSON encoding of the message list.
    pub fn fingerprint(&self) -> String {
        fingerprint(&self.messages)
    }
}

pub fn fingerprint(messages: &[Message]) -> String {
    let canonical = serde_json::to_vec(messages).expect("messages serialise");
    hex::encode(Sha256::digest(&canonical))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCounts {
    pub prompt: u64,
    pub completion: u64,
}

impl TokenCounts {
    pub fn total(&self) -> u64 {
        self.prompt + self.completion
    }
}

impl std::ops::AddAssign for TokenCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.prompt += rhs.prompt;
        self.completion += rhs.completion;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub text: String,
    pub tokens: TokenCounts,
}

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    BadResponse(String),
    #[error("cassette exhausted: request {index} has no recorded response")]
    CassetteExhausted { index: usize },
    #[error("cassette mismatch at record {index}: recorded fingerprint {recorded}, request fingerprint {actual}")]
    FingerprintMismatch { index: usize, recorded: String, actual: String },
    #[error("script expects a `{expected}` request at entry {index}, got `{actual}`")]
    ScriptMismatch { index: usize, expected: Purpose, actual: Purpose },
    #[error("missing configuration: {0}")]
    Config(String),
}

/// A text-completion backend. Implementations must tolerate concurrent calls.
pub trait Provider: Send + Sync {
    fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError>;
}

impl<P: Provider + ?Sized> Provider for &P {
    fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        (**self).complete(request)
    }
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        (**self).complete(request)
    }
}

/// Rough token estimate (four bytes per token) for providers that do not
/// report counts, such as authoring scripts.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

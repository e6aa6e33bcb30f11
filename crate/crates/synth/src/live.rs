//! HTTP provider speaking a chat-completions style JSON protocol.
//!
//! Request body: `{model, messages: [{role, content}], temperature, max_tokens}`.
//! The response must carry `choices[0].message.content` and
//! `usage.prompt_tokens` / `usage.completion_tokens`.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::provider::{Provider, ProviderError, ProviderRequest, ProviderResponse, TokenCounts};

pub const ENV_ENDPOINT: &str = "FSIM_ENDPOINT";
pub const ENV_MODEL: &str = "FSIM_MODEL";
pub const ENV_API_KEY: &str = "FSIM_API_KEY";

#[derive(Clone, Debug)]
pub struct LiveConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    /// Extra attempts after a transport failure. HTTP error statuses are not retried.
    pub retries: u32,
    pub backoff: Duration,
}

impl LiveConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self { endpoint: endpoint.into(), api_key: None, timeout: Duration::from_secs(120), retries: 2, backoff: Duration::from_millis(500) }
    }

    /// Reads the endpoint and optional API key from the environment.
    pub fn from_env() -> Result<Self, ProviderError> {
        let endpoint = std::env::var(ENV_ENDPOINT).map_err(|_| ProviderError::Config(format!("{ENV_ENDPOINT} is not set")))?;
        let mut cfg = Self::new(endpoint);
        cfg.api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        Ok(cfg)
    }
}

pub struct LiveProvider {
    cfg: LiveConfig,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    usage: WireUsage,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: String,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl LiveProvider {
    pub fn new(cfg: LiveConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(cfg.timeout).build();
        Self { cfg, agent }
    }

    #[allow(clippy::result_large_err)]
    fn post(&self, body: &serde_json::Value) -> Result<String, ureq::Error> {
        let mut req = self.agent.post(&self.cfg.endpoint).set("Content-Type", "application/json");
        if let Some(key) = &self.cfg.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = req.send_json(body.clone())?;
        resp.into_string().map_err(ureq::Error::from)
    }
}

impl Provider for LiveProvider {
    fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let body = json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let mut attempt = 0;
        let text = loop {
            attempt += 1;
            match self.post(&body) {
                Ok(text) => break text,
                Err(ureq::Error::Status(status, resp)) => {
                    let body = resp.into_string().unwrap_or_default();
                    return Err(ProviderError::Status { status, body });
                }
                Err(ureq::Error::Transport(t)) => {
                    if attempt > self.cfg.retries {
                        return Err(ProviderError::Transport { attempts: attempt, message: t.to_string() });
                    }
                    log::warn!("provider transport error (attempt {attempt}): {t}; retrying");
                    std::thread::sleep(self.cfg.backoff * attempt);
                }
            }
        };
        let wire: WireResponse = serde_json::from_str(&text).map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        let choice = wire.choices.into_iter().next().ok_or_else(|| ProviderError::BadResponse("no choices".into()))?;
        Ok(ProviderResponse {
            text: choice.message.content,
            tokens: TokenCounts { prompt: wire.usage.prompt_tokens, completion: wire.usage.completion_tokens },
        })
    }
}

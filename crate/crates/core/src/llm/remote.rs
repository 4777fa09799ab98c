//! Chat-completion client for OpenAI-compatible HTTP gateways.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{estimate_tokens, Backend, BackendError, Completion, Request};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "LOGICSCAN_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
}

fn default_timeout_ms() -> u64 {
    120_000
}

fn default_attempts() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            temperature: 0.0,
            timeout_ms: default_timeout_ms(),
            max_attempts: default_attempts(),
            backoff_base_ms: default_backoff_ms(),
        }
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl RemoteBackend {
    /// Reads the API key from the environment; requests go out without an
    /// `Authorization` header when it is unset.
    pub fn new(config: RemoteConfig) -> Self {
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self { agent: agent(config.timeout_ms), config, api_key }
    }
}

pub(crate) fn agent(timeout_ms: u64) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(timeout_ms)))
        .http_status_as_error(false)
        .build()
        .into()
}

pub(crate) enum PostError {
    /// Worth retrying: transport failure, 429 or 5xx.
    Transient(String),
    Fatal(String),
}

pub(crate) fn post_json(agent: &ureq::Agent, url: &str, key: Option<&str>, body: &Value) -> Result<Value, PostError> {
    let mut req = agent.post(url).header("Content-Type", "application/json");
    if let Some(key) = key {
        req = req.header("Authorization", format!("Bearer {key}"));
    }
    let mut resp = req.send_json(body).map_err(|e| PostError::Transient(e.to_string()))?;
    let status = resp.status().as_u16();
    if status == 429 || status >= 500 {
        return Err(PostError::Transient(format!("HTTP {status}")));
    }
    if status >= 400 {
        return Err(PostError::Fatal(format!("HTTP {status}")));
    }
    resp.body_mut().read_json::<Value>().map_err(|e| PostError::Fatal(format!("invalid response body: {e}")))
}

/// Calls `attempt` up to `max_attempts` times, sleeping `base * 2^i`
/// between transient failures.
pub(crate) fn with_retries<T>(
    max_attempts: u32,
    backoff_base_ms: u64,
    mut attempt: impl FnMut() -> Result<T, PostError>,
) -> Result<T, String> {
    let mut last = String::new();
    for i in 0..max_attempts.max(1) {
        if i > 0 {
            std::thread::sleep(Duration::from_millis(backoff_base_ms.saturating_mul(1 << (i - 1).min(16))));
        }
        match attempt() {
            Ok(v) => return Ok(v),
            Err(PostError::Fatal(e)) => return Err(e),
            Err(PostError::Transient(e)) => {
                log::warn!("attempt {} of {} failed: {e}", i + 1, max_attempts);
                last = e;
            }
        }
    }
    Err(format!("{last} after {max_attempts} attempts"))
}

impl Backend for RemoteBackend {
    fn complete(&self, request: &Request<'_>) -> Result<Completion, BackendError> {
        let started = Instant::now();
        let messages: Vec<Value> =
            request.messages.iter().map(|m| json!({"role": m.role, "content": m.content})).collect();
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": messages,
        });
        let result = with_retries(self.config.max_attempts, self.config.backoff_base_ms, || {
            let v = post_json(&self.agent, &self.config.endpoint, self.api_key.as_deref(), &body)?;
            let text = v
                .pointer("/choices/0/message/content")
                .and_then(Value::as_str)
                .ok_or_else(|| PostError::Fatal("response has no choices[0].message.content".into()))?
                .to_owned();
            Ok((text, v))
        });
        let elapsed_ms = started.elapsed().as_millis() as u64;
        match result {
            Ok((text, v)) => {
                let usage = |field: &str| v.pointer(&format!("/usage/{field}")).and_then(Value::as_u64);
                Ok(Completion {
                    tokens_in: usage("prompt_tokens")
                        .unwrap_or_else(|| request.messages.iter().map(|m| estimate_tokens(&m.content)).sum()),
                    tokens_out: usage("completion_tokens").unwrap_or_else(|| estimate_tokens(&text)),
                    elapsed_ms,
                    text,
                })
            }
            Err(reason) => Err(BackendError::Unavailable { reason, elapsed_ms }),
        }
    }
}

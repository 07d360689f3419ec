use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tracing::warn;

use super::{BackendError, Completion, FinishReason, Generator, SamplingParams};
use crate::dataset::Query;
use crate::rng::CounterRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    /// Exponential backoff with up to 50% jitter for the given 1-based attempt.
    pub fn delay(&self, attempt: u32, jitter_key: u64) -> Duration {
        let exp = self
            .base_delay_ms
            .saturating_mul(1u64 << attempt.saturating_sub(1).min(20))
            .min(self.max_delay_ms);
        let u = CounterRng::new(jitter_key).uniform(u64::from(attempt));
        Duration::from_millis((exp as f64 * (0.5 + 0.5 * u)) as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub url: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            url: "http://127.0.0.1:8000/v1/completions".to_string(),
            model: "deepseek-math-7b-rl".to_string(),
            api_key_env: "DARS_API_KEY".to_string(),
            timeout_secs: 600,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
    n: u32,
}

/// Completions-style JSON endpoint.
pub struct HttpBackend {
    config: HttpConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

enum Attempt {
    Retry(String),
    Fatal(BackendError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Self::with_api_key(config, api_key)
    }

    pub fn with_api_key(config: HttpConfig, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .build()
            .into();
        Self { config, api_key, agent }
    }

    fn attempt(&self, body: &CompletionRequest<'_>, trial_base: u64) -> Result<Vec<Completion>, Attempt> {
        let mut req = self.agent.post(&self.config.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Err(Attempt::Retry(e.to_string())),
        };
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(format!("reading body: {e}")))?;
        if status == 429 || status >= 500 {
            return Err(Attempt::Retry(format!("status {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(Attempt::Fatal(BackendError::Protocol(format!("status {status}: {text}"))));
        }
        let json: Value = serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(BackendError::Protocol(format!("invalid JSON: {e}"))))?;
        parse_choices(&json, body.n, trial_base).map_err(Attempt::Fatal)
    }
}

/// Accepts `{"choices": [{"text", "finish_reason", "index"?}]}` or a bare
/// array of strings under `choices`.
fn parse_choices(json: &Value, n: u32, trial_base: u64) -> Result<Vec<Completion>, BackendError> {
    let choices = json
        .get("choices")
        .and_then(Value::as_array)
        .ok_or_else(|| BackendError::Protocol("missing choices array".into()))?;
    if choices.len() != n as usize {
        return Err(BackendError::Protocol(format!("expected {n} choices, got {}", choices.len())));
    }
    let mut items = Vec::with_capacity(choices.len());
    for (pos, c) in choices.iter().enumerate() {
        let (index, text, finish) = match c {
            Value::String(s) => (pos as u64, s.clone(), FinishReason::Stop),
            Value::Object(o) => {
                let text = o
                    .get("text")
                    .and_then(Value::as_str)
                    .ok_or_else(|| BackendError::Protocol(format!("choice {pos} has no text")))?;
                let index = o.get("index").and_then(Value::as_u64).unwrap_or(pos as u64);
                let finish = match o.get("finish_reason").and_then(Value::as_str) {
                    Some("length") => FinishReason::Length,
                    Some("stop") | None => FinishReason::Stop,
                    Some(_) => FinishReason::Other,
                };
                (index, text.to_string(), finish)
            }
            _ => return Err(BackendError::Protocol(format!("choice {pos} is not text"))),
        };
        items.push((index, text, finish));
    }
    items.sort_by_key(|(i, _, _)| *i);
    if items.iter().enumerate().any(|(pos, (i, _, _))| *i != pos as u64) {
        return Err(BackendError::Protocol("choice indices are not 0..n".into()));
    }
    Ok(items
        .into_iter()
        .map(|(i, text, finish)| Completion { trial: trial_base + i, text, finish })
        .collect())
}

impl Generator for HttpBackend {
    fn generate(
        &self,
        query: &Query,
        prompt: &str,
        params: &SamplingParams,
        trial_base: u64,
    ) -> Result<Vec<Completion>, BackendError> {
        let body = CompletionRequest {
            model: &self.config.model,
            prompt,
            temperature: params.temperature,
            top_p: params.top_p,
            max_tokens: params.max_tokens,
            n: params.n,
        };
        let policy = self.config.retry;
        let jitter_key = crate::rng::fnv1a(query.id.as_bytes()) ^ trial_base;
        let mut last = String::new();
        for attempt in 1..=policy.max_attempts.max(1) {
            match self.attempt(&body, trial_base) {
                Ok(c) => return Ok(c),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    warn!(query = %query.id, attempt, "transport error: {msg}");
                    last = msg;
                    if attempt < policy.max_attempts {
                        std::thread::sleep(policy.delay(attempt, jitter_key));
                    }
                }
            }
        }
        Err(BackendError::Transport {
            attempts: policy.max_attempts.max(1),
            message: last,
        })
    }
}

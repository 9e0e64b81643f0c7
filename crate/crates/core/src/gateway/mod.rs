//! Chat-completion backends behind one contract.

mod remote;
mod scripted;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::prompt::RenderedPrompt;

pub use remote::{parse_response, request_body, RemoteBackend, WireMessage, WireRequest};
pub use scripted::{Script, ScriptEntry, ScriptRule, ScriptedBackend};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("script exhausted")]
    ScriptExhausted,
    #[error("deadline exceeded")]
    DeadlineExceeded,
    #[error("prompt has no user message")]
    EmptyPrompt,
    #[error("invalid backend config: {0}")]
    Config(String),
}

impl GatewayError {
    /// Transport failures, rate limiting and server errors may succeed on a
    /// later attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Transport(_) => true,
            GatewayError::HttpStatus { status, .. } => {
                *status == 429 || (500..600).contains(status)
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub total_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub usage: Option<Usage>,
    pub attempts: u32,
}

pub trait ChatBackend: Send + Sync {
    /// Sends `prompt` and returns the reply text. `limit` bounds the time the
    /// call may take, retries included.
    fn complete(
        &self,
        prompt: &RenderedPrompt,
        limit: Option<Duration>,
    ) -> Result<Completion, GatewayError>;
}

pub(crate) fn check_prompt(prompt: &RenderedPrompt) -> Result<(), GatewayError> {
    if prompt.user_content().trim().is_empty() {
        Err(GatewayError::EmptyPrompt)
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base: Duration::from_millis(500),
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Upper bound of the wait before retry number `retry` (0-based).
    pub fn backoff_cap(&self, retry: u32) -> Duration {
        self.base.mul_f64(self.factor.powi(retry as i32))
    }
}

/// Runs `attempt` until it succeeds, fails with a non-retryable error or the
/// retry budget is spent. Waits are drawn uniformly from zero to the
/// exponential cap. `sleep` returns false when waiting would pass a deadline,
/// which ends the loop. Returns the last result and the number of attempts.
pub fn with_retry<T>(
    policy: &RetryPolicy,
    rng: &mut impl Rng,
    mut sleep: impl FnMut(Duration) -> bool,
    mut attempt: impl FnMut(u32) -> Result<T, GatewayError>,
) -> (Result<T, GatewayError>, u32) {
    let mut attempts = 0;
    loop {
        attempts += 1;
        let result = attempt(attempts);
        match &result {
            Err(e) if e.is_retryable() && attempts <= policy.max_retries => {
                let cap = policy.backoff_cap(attempts - 1);
                let wait = cap.mul_f64(rng.random_range(0.0..=1.0));
                if !sleep(wait) {
                    return (Err(GatewayError::DeadlineExceeded), attempts);
                }
            }
            _ => return (result, attempts),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: Option<String>,
    pub model_name: String,
    pub temperature: f64,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub retry_base_ms: u64,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    /// Script file for the scripted backend.
    pub script: Option<PathBuf>,
    pub seed: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Scripted,
            base_url: None,
            model_name: String::new(),
            temperature: 0.0,
            timeout_secs: 120.0,
            max_retries: 3,
            retry_base_ms: 500,
            api_key_env: "TUTORLOOP_API_KEY".into(),
            script: None,
            seed: 0,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: &str| Err(GatewayError::Config(m.to_string()));
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return bad("temperature must be a non-negative number");
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return bad("timeout must be positive");
        }
        match self.kind {
            BackendKind::Remote => {
                if self.base_url.as_deref().is_none_or(|u| u.trim().is_empty()) {
                    return bad("remote backend needs base_url");
                }
                if self.model_name.trim().is_empty() {
                    return bad("remote backend needs model_name");
                }
            }
            BackendKind::Scripted => {
                if self.script.is_none() {
                    return bad("scripted backend needs a script file");
                }
            }
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            base: Duration::from_millis(self.retry_base_ms),
            factor: 2.0,
        }
    }
}

/// Builds the backend described by `config`.
pub fn build_backend(
    config: &BackendConfig,
    clock: Arc<dyn Clock>,
) -> Result<Arc<dyn ChatBackend>, GatewayError> {
    config.validate()?;
    match config.kind {
        BackendKind::Remote => Ok(Arc::new(RemoteBackend::new(config.clone())?)),
        BackendKind::Scripted => {
            let path = config.script.as_ref().expect("validated");
            let script = Script::load(path)?;
            Ok(Arc::new(ScriptedBackend::new(script, clock)))
        }
    }
}

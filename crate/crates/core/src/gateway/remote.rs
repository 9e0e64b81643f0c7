use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    check_prompt, with_retry, BackendConfig, ChatBackend, Completion, GatewayError, RetryPolicy,
    Usage,
};
use crate::prompt::RenderedPrompt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub role: String,
    pub content: String,
}

/// Body of an OpenAI-style chat completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub model: String,
    pub messages: Vec<WireMessage>,
    pub temperature: f64,
}

pub fn request_body(prompt: &RenderedPrompt, model: &str, temperature: f64) -> WireRequest {
    WireRequest {
        model: model.to_string(),
        messages: prompt
            .messages
            .iter()
            .map(|m| WireMessage {
                role: m.role.as_str().to_string(),
                content: m.content.clone(),
            })
            .collect(),
        temperature,
    }
}

/// Extracts `choices[0].message.content` and the optional usage block.
pub fn parse_response(body: &str) -> Result<(String, Option<Usage>), GatewayError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| GatewayError::Malformed(e.to_string()))?;
    let text = value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::Malformed("missing choices[0].message.content".into()))?;
    let usage = value.get("usage").filter(|u| u.is_object()).map(|u| Usage {
        prompt_tokens: u.get("prompt_tokens").and_then(Value::as_u64),
        completion_tokens: u.get("completion_tokens").and_then(Value::as_u64),
        total_tokens: u.get("total_tokens").and_then(Value::as_u64),
    });
    Ok((text.to_string(), usage))
}

/// Talks to an OpenAI-compatible `/chat/completions` endpoint.
pub struct RemoteBackend {
    config: BackendConfig,
    policy: RetryPolicy,
    agent: ureq::Agent,
    rng: Mutex<ChaCha8Rng>,
}

impl RemoteBackend {
    pub fn new(config: BackendConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        Ok(RemoteBackend {
            policy: config.retry_policy(),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(config.seed)),
            agent,
            config,
        })
    }

    fn endpoint(&self) -> String {
        let base = self
            .config
            .base_url
            .as_deref()
            .unwrap_or_default()
            .trim_end_matches('/');
        format!("{base}/chat/completions")
    }

    fn attempt(
        &self,
        body: &WireRequest,
        timeout: Duration,
    ) -> Result<(String, Option<Usage>), GatewayError> {
        let mut request = self
            .agent
            .post(&self.endpoint())
            .config()
            .timeout_global(Some(timeout))
            .build();
        if let Ok(key) = std::env::var(&self.config.api_key_env) {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send_json(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => GatewayError::DeadlineExceeded,
            other => GatewayError::Transport(other.to_string()),
        })?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(GatewayError::HttpStatus { status, body: text });
        }
        parse_response(&text)
    }
}

impl ChatBackend for RemoteBackend {
    fn complete(
        &self,
        prompt: &RenderedPrompt,
        limit: Option<Duration>,
    ) -> Result<Completion, GatewayError> {
        check_prompt(prompt)?;
        let body = request_body(prompt, &self.config.model_name, self.config.temperature);
        let per_call = Duration::from_secs_f64(self.config.timeout_secs);
        let deadline = limit.map(|l| Instant::now() + l);
        let remaining = || deadline.map(|d| d.saturating_duration_since(Instant::now()));
        let mut rng = self.rng.lock().expect("lock").clone();
        let (result, attempts) = with_retry(
            &self.policy,
            &mut rng,
            |wait| match remaining() {
                Some(left) if wait >= left => false,
                _ => {
                    std::thread::sleep(wait);
                    true
                }
            },
            |_| {
                let timeout = remaining().map_or(per_call, |left| left.min(per_call));
                if timeout.is_zero() {
                    return Err(GatewayError::DeadlineExceeded);
                }
                self.attempt(&body, timeout)
            },
        );
        *self.rng.lock().expect("lock") = rng;
        let (text, usage) = result?;
        Ok(Completion {
            text,
            usage,
            attempts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_content_and_usage() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}],"usage":{"prompt_tokens":3,"completion_tokens":1,"total_tokens":4}}"#;
        let (text, usage) = parse_response(body).unwrap();
        assert_eq!(text, "hi");
        assert_eq!(usage.unwrap().total_tokens, Some(4));
        let (_, usage) = parse_response(r#"{"choices":[{"message":{"content":""}}]}"#).unwrap();
        assert!(usage.is_none());
    }

    #[test]
    fn missing_content_is_malformed() {
        assert!(matches!(
            parse_response("{}"),
            Err(GatewayError::Malformed(_))
        ));
        assert!(matches!(
            parse_response("not json"),
            Err(GatewayError::Malformed(_))
        ));
        assert!(matches!(
            parse_response(r#"{"choices":[{"message":{"content":5}}]}"#),
            Err(GatewayError::Malformed(_))
        ));
    }
}

use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{check_prompt, ChatBackend, Completion, GatewayError};
use crate::clock::Clock;
use crate::prompt::{RenderedPrompt, TemplateId};

/// One canned reply. `status` simulates an HTTP failure instead of a reply;
/// `delay_ms` is waited on the backend's clock first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub delay_ms: u64,
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

impl ScriptEntry {
    pub fn text(text: impl Into<String>) -> Self {
        ScriptEntry {
            text: Some(text.into()),
            ..ScriptEntry::default()
        }
    }
}

/// A reply used for every prompt that matches, once the queue is empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<TemplateId>,
    /// Substring that must occur in the prompt's user turns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(flatten)]
    pub entry: ScriptEntry,
}

impl ScriptRule {
    fn matches(&self, prompt: &RenderedPrompt) -> bool {
        if self.template.is_some_and(|t| t != prompt.template) {
            return false;
        }
        match &self.contains {
            None => true,
            Some(needle) => prompt
                .messages
                .iter()
                .any(|m| m.content.contains(needle.as_str())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    /// When false, an exhausted queue keeps repeating its last entry.
    #[serde(default = "default_strict")]
    pub strict: bool,
    #[serde(default)]
    pub responses: Vec<ScriptEntry>,
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
}

fn default_strict() -> bool {
    true
}

impl Script {
    pub fn from_texts<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Self {
        Script {
            strict: true,
            responses: texts.into_iter().map(ScriptEntry::text).collect(),
            rules: Vec::new(),
        }
    }

    pub fn repeating(mut self) -> Self {
        self.strict = false;
        self
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Default)]
struct State {
    cursor: usize,
    calls: Vec<RenderedPrompt>,
}

/// Replays a script: queued replies in order, then the first matching rule.
/// Replies and waits are deterministic, so runs against a virtual clock are
/// reproducible. One instance should serve one session at a time.
pub struct ScriptedBackend {
    script: Script,
    state: Mutex<State>,
    clock: Arc<dyn Clock>,
}

impl ScriptedBackend {
    pub fn new(script: Script, clock: Arc<dyn Clock>) -> Self {
        ScriptedBackend {
            script,
            state: Mutex::new(State::default()),
            clock,
        }
    }

    /// Number of queued replies consumed so far.
    pub fn cursor(&self) -> usize {
        self.state.lock().expect("lock").cursor
    }

    /// Every prompt received, in order.
    pub fn calls(&self) -> Vec<RenderedPrompt> {
        self.state.lock().expect("lock").calls.clone()
    }

    fn next_entry(&self, prompt: &RenderedPrompt) -> Result<ScriptEntry, GatewayError> {
        let mut state = self.state.lock().expect("lock");
        state.calls.push(prompt.clone());
        if let Some(entry) = self.script.responses.get(state.cursor) {
            state.cursor += 1;
            return Ok(entry.clone());
        }
        if let Some(rule) = self.script.rules.iter().find(|r| r.matches(prompt)) {
            return Ok(rule.entry.clone());
        }
        match self.script.responses.last() {
            Some(last) if !self.script.strict => Ok(last.clone()),
            _ => Err(GatewayError::ScriptExhausted),
        }
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(
        &self,
        prompt: &RenderedPrompt,
        limit: Option<Duration>,
    ) -> Result<Completion, GatewayError> {
        check_prompt(prompt)?;
        let entry = self.next_entry(prompt)?;
        let delay = Duration::from_millis(entry.delay_ms);
        if let Some(limit) = limit {
            if delay > limit {
                self.clock.sleep(limit);
                return Err(GatewayError::DeadlineExceeded);
            }
        }
        if !delay.is_zero() {
            self.clock.sleep(delay);
        }
        if let Some(status) = entry.status {
            return Err(GatewayError::HttpStatus {
                status,
                body: entry.text.unwrap_or_default(),
            });
        }
        let text = entry
            .text
            .ok_or_else(|| GatewayError::Malformed("script entry has no text".into()))?;
        Ok(Completion {
            text,
            usage: None,
            attempts: 1,
        })
    }
}

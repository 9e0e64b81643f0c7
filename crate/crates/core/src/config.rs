use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("invalid config: {0}")]
pub struct ConfigError(pub String);

/// Knobs for one session's workflows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Lint-triggered buildup iterations allowed per subtask.
    pub max_lint_iters: u32,
    /// Runtime-fix and feature-request iterations allowed per subtask.
    pub max_runtime_iters: u32,
    /// A subtask still unresolved after this many seconds is timed out.
    pub subtask_timeout_secs: f64,
    /// Finish a subtask as soon as verification passes instead of waiting
    /// for an explicit accept.
    pub auto_accept_on_pass: bool,
    /// How many earlier answers are replayed into new concept and code
    /// prompts.
    pub context_depth: usize,
    /// Execute code after it passes lint.
    pub run_code: bool,
    /// Repair lint failures without waiting for the user to pick a message.
    /// When off, each user lint repair runs a single buildup step.
    pub auto_lint_repair: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            max_lint_iters: 8,
            max_runtime_iters: 8,
            subtask_timeout_secs: 3600.0,
            auto_accept_on_pass: false,
            context_depth: 1,
            run_code: true,
            auto_lint_repair: true,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_lint_iters == 0 {
            return Err(ConfigError("max_lint_iters must be positive".into()));
        }
        if self.max_runtime_iters == 0 {
            return Err(ConfigError("max_runtime_iters must be positive".into()));
        }
        if !(self.subtask_timeout_secs.is_finite() && self.subtask_timeout_secs > 0.0) {
            return Err(ConfigError("subtask_timeout_secs must be positive".into()));
        }
        Ok(())
    }

    /// Sets both repair budgets at once.
    pub fn with_repair_iters(mut self, iters: u32) -> Self {
        self.max_lint_iters = iters;
        self.max_runtime_iters = iters;
        self
    }

    pub fn timeout_ms(&self) -> u64 {
        (self.subtask_timeout_secs * 1000.0).round() as u64
    }
}

//! Lint and sandboxed execution of generated programs. Both tools are
//! external commands configured as templates with a `{file}` placeholder.

mod lint;
mod sandbox;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, SystemClock};

pub use lint::{infer_rule, parse_lint_output, LintMessage, ParsedLint};
pub use sandbox::{run_limited, Captured, Limits, ProcessOutput};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("tool not found: {0}")]
    ToolNotFound(String),
    #[error("{tool} failed with exit status {exit:?}: {output}")]
    ToolCrash {
        tool: String,
        exit: Option<i32>,
        output: String,
    },
    #[error("sandbox setup failed: {0}")]
    SandboxSetup(String),
    #[error("bad command template: {0}")]
    BadCommand(String),
    #[error("code is empty")]
    EmptyCode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LintVerdict {
    Pass,
    Fail,
}

/// Lint result; the verdict is derived from the messages so the two cannot
/// disagree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LintReportRepr")]
pub struct LintReport {
    verdict: LintVerdict,
    messages: Vec<LintMessage>,
    tool_exit: i32,
}

#[derive(Deserialize)]
struct LintReportRepr {
    verdict: LintVerdict,
    messages: Vec<LintMessage>,
    tool_exit: i32,
}

impl TryFrom<LintReportRepr> for LintReport {
    type Error = String;

    fn try_from(r: LintReportRepr) -> Result<Self, Self::Error> {
        let report = LintReport::new(r.messages, r.tool_exit);
        if report.verdict != r.verdict {
            return Err(format!(
                "verdict {:?} contradicts the message list",
                r.verdict
            ));
        }
        Ok(report)
    }
}

impl LintReport {
    pub fn new(mut messages: Vec<LintMessage>, tool_exit: i32) -> Self {
        messages.sort_by_key(|m| (m.line, m.column));
        let verdict = if messages.is_empty() {
            LintVerdict::Pass
        } else {
            LintVerdict::Fail
        };
        LintReport {
            verdict,
            messages,
            tool_exit,
        }
    }

    pub fn verdict(&self) -> LintVerdict {
        self.verdict
    }

    /// Messages in (line, column) order.
    pub fn messages(&self) -> &[LintMessage] {
        &self.messages
    }

    pub fn tool_exit(&self) -> i32 {
        self.tool_exit
    }

    pub fn passed(&self) -> bool {
        self.verdict == LintVerdict::Pass
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunVerdict {
    Ok,
    RuntimeError,
    Timeout,
    ResourceLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RunReportRepr")]
pub struct RunReport {
    pub verdict: RunVerdict,
    pub stdout: String,
    pub stderr: String,
    pub stdout_truncated: bool,
    pub stderr_truncated: bool,
    /// Last non-empty stderr line; present exactly for runtime errors.
    pub err_summary: Option<String>,
    pub duration_secs: f64,
    pub exit_code: Option<i32>,
}

#[derive(Deserialize)]
struct RunReportRepr {
    verdict: RunVerdict,
    stdout: String,
    stderr: String,
    stdout_truncated: bool,
    stderr_truncated: bool,
    err_summary: Option<String>,
    duration_secs: f64,
    exit_code: Option<i32>,
}

impl TryFrom<RunReportRepr> for RunReport {
    type Error = String;

    fn try_from(r: RunReportRepr) -> Result<Self, Self::Error> {
        if r.err_summary.is_some() != (r.verdict == RunVerdict::RuntimeError) {
            return Err("err_summary must be present exactly for runtime errors".into());
        }
        Ok(RunReport {
            verdict: r.verdict,
            stdout: r.stdout,
            stderr: r.stderr,
            stdout_truncated: r.stdout_truncated,
            stderr_truncated: r.stderr_truncated,
            err_summary: r.err_summary,
            duration_secs: r.duration_secs,
            exit_code: r.exit_code,
        })
    }
}

impl RunReport {
    pub fn from_output(out: ProcessOutput, duration_secs: f64) -> Self {
        let last_line = out
            .stderr
            .text
            .lines()
            .rev()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .map(str::to_string);
        let verdict = if out.timed_out {
            RunVerdict::Timeout
        } else if out.output_overflow || out.signal.is_some() {
            RunVerdict::ResourceLimit
        } else if out.exit_code == Some(0) {
            RunVerdict::Ok
        } else if last_line
            .as_deref()
            .is_some_and(|l| l.contains("MemoryError"))
        {
            RunVerdict::ResourceLimit
        } else {
            RunVerdict::RuntimeError
        };
        let err_summary = (verdict == RunVerdict::RuntimeError).then(|| {
            last_line.unwrap_or_else(|| {
                format!("process exited with status {}", out.exit_code.unwrap_or(-1))
            })
        });
        RunReport {
            verdict,
            stdout: out.stdout.text,
            stderr: out.stderr.text,
            stdout_truncated: out.stdout.truncated,
            stderr_truncated: out.stderr.truncated,
            err_summary,
            duration_secs,
            exit_code: out.exit_code,
        }
    }

    /// Text for a "How to fix" prompt: the error line, or a description of
    /// the limit that was hit.
    pub fn problem(&self) -> Option<String> {
        match self.verdict {
            RunVerdict::Ok => None,
            RunVerdict::RuntimeError => self.err_summary.clone(),
            RunVerdict::Timeout => Some("the program did not finish within the time limit".into()),
            RunVerdict::ResourceLimit => {
                Some("the program exceeded its memory or output limit".into())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifierConfig {
    pub lint_cmd: String,
    pub run_cmd: String,
    pub entry_file: String,
    pub wall_secs: f64,
    pub lint_wall_secs: f64,
    pub memory_bytes: u64,
    pub output_bytes: usize,
    pub network: bool,
    /// Parent directory for workspaces; the system temp dir when unset.
    pub workspace_parent: Option<PathBuf>,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig {
            lint_cmd: "pyflakes {file}".into(),
            run_cmd: "python3 {file}".into(),
            entry_file: "main.py".into(),
            wall_secs: 30.0,
            lint_wall_secs: 30.0,
            memory_bytes: 512 * 1024 * 1024,
            output_bytes: 1024 * 1024,
            network: true,
            workspace_parent: None,
        }
    }
}

/// A fresh directory holding one candidate program. Removed on drop.
#[derive(Debug)]
pub struct Workspace {
    dir: tempfile::TempDir,
    entry_file: PathBuf,
    pub limits: Limits,
}

impl Workspace {
    pub fn root(&self) -> &Path {
        self.dir.path()
    }

    pub fn entry_file(&self) -> &Path {
        &self.entry_file
    }
}

fn expand(template: &str, file: &Path) -> Result<Vec<String>, VerifyError> {
    let argv: Vec<String> = template
        .split_whitespace()
        .map(|part| part.replace("{file}", &file.to_string_lossy()))
        .collect();
    if argv.is_empty() {
        return Err(VerifyError::BadCommand("empty command".into()));
    }
    if !template.contains("{file}") {
        return Err(VerifyError::BadCommand(format!(
            "{template:?} has no {{file}} placeholder"
        )));
    }
    Ok(argv)
}

#[derive(Clone)]
pub struct Verifier {
    config: VerifierConfig,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Verifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Verifier")
            .field("config", &self.config)
            .finish()
    }
}

impl Default for Verifier {
    fn default() -> Self {
        Verifier::new(VerifierConfig::default(), Arc::new(SystemClock))
    }
}

impl Verifier {
    /// `clock` measures reported durations; limits always use real time.
    pub fn new(config: VerifierConfig, clock: Arc<dyn Clock>) -> Self {
        Verifier { config, clock }
    }

    pub fn config(&self) -> &VerifierConfig {
        &self.config
    }

    fn limits(&self, wall_secs: f64) -> Limits {
        Limits {
            wall: Duration::from_secs_f64(wall_secs.max(0.0)),
            memory_bytes: Some(self.config.memory_bytes),
            output_bytes: self.config.output_bytes,
            network: self.config.network,
        }
    }

    pub fn write_workspace(&self, code: &str) -> Result<Workspace, VerifyError> {
        if code.trim().is_empty() {
            return Err(VerifyError::EmptyCode);
        }
        let mut builder = tempfile::Builder::new();
        builder.prefix("tutorloop-");
        let dir = match &self.config.workspace_parent {
            Some(parent) => builder.tempdir_in(parent)?,
            None => builder.tempdir()?,
        };
        let entry_file = dir.path().join(&self.config.entry_file);
        fs::write(&entry_file, code)?;
        Ok(Workspace {
            dir,
            entry_file,
            limits: self.limits(self.config.wall_secs),
        })
    }

    pub fn lint(&self, ws: &Workspace) -> Result<LintReport, VerifyError> {
        let argv = expand(&self.config.lint_cmd, ws.entry_file())?;
        let out = run_limited(&argv, ws.root(), &self.limits(self.config.lint_wall_secs))?;
        let tool = argv[0].clone();
        if out.timed_out {
            return Err(VerifyError::ToolCrash {
                tool,
                exit: None,
                output: "lint timed out".into(),
            });
        }
        let combined = format!("{}\n{}", out.stdout.text, out.stderr.text);
        let mut parsed = parse_lint_output(&combined);
        // Report paths relative to the workspace so they do not depend on
        // where the temporary directory was created.
        let root = format!("{}/", ws.root().display());
        for m in &mut parsed.messages {
            if let Some(rel) = m.file.strip_prefix(&root) {
                m.file = rel.to_string();
            }
        }
        let exit = out.exit_code.unwrap_or(-1);
        if parsed.messages.is_empty() && exit != 0 {
            return Err(VerifyError::ToolCrash {
                tool,
                exit: out.exit_code,
                output: combined.trim().to_string(),
            });
        }
        Ok(LintReport::new(parsed.messages, exit))
    }

    pub fn run(&self, ws: &Workspace) -> Result<RunReport, VerifyError> {
        self.run_with_limit(ws, ws.limits.wall)
    }

    pub fn run_with_limit(&self, ws: &Workspace, wall: Duration) -> Result<RunReport, VerifyError> {
        let argv = expand(&self.config.run_cmd, ws.entry_file())?;
        let limits = Limits {
            wall: wall.min(ws.limits.wall),
            ..ws.limits.clone()
        };
        let start = self.clock.now_ms();
        let out = run_limited(&argv, ws.root(), &limits)?;
        let duration = self.clock.now_ms().saturating_sub(start) as f64 / 1000.0;
        Ok(RunReport::from_output(out, duration))
    }
}

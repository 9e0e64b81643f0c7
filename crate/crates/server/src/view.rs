//! Read models served to clients. Everything here is computed from a
//! session alone, so replaying a transcript reproduces every view.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tutorloop_core::config::EngineConfig;
use tutorloop_core::session::{
    Answer, FailureKind, Keyword, RelatedQa, RepairTrigger, Session, SubTask, SubTaskId,
    SubTaskKind, SubTaskStatus,
};
use tutorloop_core::verifier::{LintMessage, LintVerdict, RunReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubTaskView {
    pub id: SubTaskId,
    pub text: String,
    pub kind: SubTaskKind,
    pub status: SubTaskStatus,
    pub followup_of: Option<SubTaskId>,
    pub elapsed_secs: f64,
    pub llm_calls: u32,
    pub repairs: Vec<RepairTrigger>,
    pub failure: Option<FailureKind>,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LintMessageView {
    /// Stable for a given revision and position; see [`lint_message_id`].
    pub id: String,
    pub line: u32,
    pub column: u32,
    pub rule: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AnswerView {
    Concept {
        subtask: SubTaskId,
        explanation: String,
        keywords: Vec<Keyword>,
        related: Vec<RelatedQa>,
    },
    Code {
        subtask: SubTaskId,
        code: String,
        revision: u32,
        related: Vec<RelatedQa>,
        lint: Option<LintVerdict>,
        lint_messages: Vec<LintMessageView>,
        run: Option<RunReport>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub scenario: Option<String>,
    pub config: EngineConfig,
    pub last_seq: u64,
    pub subtasks: Vec<SubTaskView>,
    /// Answer of the most recent subtask that has one.
    pub answer: Option<AnswerView>,
    /// Lint messages of the open coding subtask that a repair can target.
    pub pending_lint: Vec<LintMessageView>,
}

/// Hex digest of (revision, line, column, rule), shortened to 16 digits.
pub fn lint_message_id(revision: u32, m: &LintMessage) -> String {
    let digest =
        Sha256::digest(format!("{revision}:{}:{}:{}", m.line, m.column, m.rule).as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn lint_views(revision: u32, messages: &[LintMessage]) -> Vec<LintMessageView> {
    messages
        .iter()
        .map(|m| LintMessageView {
            id: lint_message_id(revision, m),
            line: m.line,
            column: m.column,
            rule: m.rule.clone(),
            text: m.text.clone(),
        })
        .collect()
}

fn subtask_view(t: &SubTask) -> SubTaskView {
    SubTaskView {
        id: t.id,
        text: t.text.clone(),
        kind: t.kind,
        status: t.status,
        followup_of: t.followup_of,
        elapsed_secs: t.elapsed_secs,
        llm_calls: t.llm_calls,
        repairs: t.trace.iter().map(|s| s.trigger).collect(),
        failure: t.failure,
        reason: t.reason.clone(),
    }
}

fn answer_view(t: &SubTask) -> Option<AnswerView> {
    Some(match t.answer.as_ref()? {
        Answer::Concept(c) => AnswerView::Concept {
            subtask: t.id,
            explanation: c.explanation.clone(),
            keywords: c.keywords.clone(),
            related: c.related.clone(),
        },
        Answer::Code(c) => AnswerView::Code {
            subtask: t.id,
            code: c.code.clone(),
            revision: c.revision,
            related: c.related.clone(),
            lint: c.lint.as_ref().map(|l| l.verdict()),
            lint_messages: c
                .lint
                .as_ref()
                .map(|l| lint_views(c.revision, l.messages()))
                .unwrap_or_default(),
            run: c.run.clone(),
        },
    })
}

pub fn project(s: &Session) -> SessionView {
    let pending_lint = s
        .in_progress()
        .and_then(|t| t.code())
        .and_then(|c| {
            c.lint
                .as_ref()
                .map(|l| lint_views(c.revision, l.messages()))
        })
        .unwrap_or_default();
    SessionView {
        id: s.id.clone(),
        scenario: s.scenario.as_ref().map(|sc| sc.id.clone()),
        config: s.config.clone(),
        last_seq: s.last_seq(),
        subtasks: s.subtasks().iter().map(subtask_view).collect(),
        answer: s.subtasks().iter().rev().find_map(answer_view),
        pending_lint,
    }
}

/// Finds the pending lint message with `id`.
pub fn find_lint_message(s: &Session, id: &str) -> Option<LintMessage> {
    let code = s.in_progress()?.code()?;
    code.lint
        .as_ref()?
        .messages()
        .iter()
        .find(|m| lint_message_id(code.revision, m) == id)
        .cloned()
}

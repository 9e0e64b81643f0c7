//! Event-sourced session state. Every mutation is an event appended to the
//! log and folded into the state by one validating reducer, so replaying a
//! stored log rebuilds the same state.

mod transcript;
mod types;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::ScenarioSpec;
use crate::clock::Clock;
use crate::config::{ConfigError, EngineConfig};
use crate::gateway::Usage;
use crate::prompt::{ChatMessage, TemplateId};
use crate::verifier::{LintMessage, LintReport, RunReport};

pub use transcript::{
    load_transcript, read_transcript, save_transcript, write_transcript, TranscriptError,
};
pub use types::*;

#[derive(Debug, Error, PartialEq)]
pub enum SessionError {
    #[error(transparent)]
    InvalidConfig(#[from] ConfigError),
    #[error("sequence gap: expected seq {expected}, got {got}")]
    SequenceGap { expected: u64, got: u64 },
    #[error("timestamp {got} precedes the previous event at {last}")]
    TimeWentBackwards { last: u64, got: u64 },
    #[error("unknown subtask {0}")]
    UnknownSubTask(SubTaskId),
    #[error("subtask {subtask}: illegal transition from {from:?} to {to:?}")]
    IllegalTransition {
        subtask: SubTaskId,
        from: SubTaskStatus,
        to: SubTaskStatus,
    },
    #[error("subtask {0} is still open")]
    Busy(SubTaskId),
    #[error("question is empty")]
    EmptyQuestion,
    #[error("invalid event: {0}")]
    InvalidEvent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SubTaskStarted,
    Classified,
    PromptSent,
    ResponseReceived,
    LintRun,
    CodeRun,
    RepairRequested,
    KeywordDefined,
    SubTaskFinished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    SubTaskStarted {
        subtask: SubTaskId,
        text: String,
        followup_of: Option<SubTaskId>,
    },
    Classified {
        subtask: SubTaskId,
        kind: SubTaskKind,
        p_code: Option<f64>,
    },
    PromptSent {
        subtask: SubTaskId,
        template: TemplateId,
        messages: Vec<ChatMessage>,
    },
    ResponseReceived {
        subtask: SubTaskId,
        template: TemplateId,
        /// `None` when the backend call failed.
        text: Option<String>,
        usage: Option<Usage>,
        attempts: u32,
        answer: Option<AnswerUpdate>,
        warnings: Vec<String>,
        error: Option<String>,
    },
    LintRun {
        subtask: SubTaskId,
        revision: u32,
        report: LintReport,
    },
    CodeRun {
        subtask: SubTaskId,
        revision: u32,
        report: RunReport,
    },
    RepairRequested {
        subtask: SubTaskId,
        trigger: RepairTrigger,
        q_buildup: String,
        target: Option<LintMessage>,
        code_before: String,
    },
    KeywordDefined {
        subtask: SubTaskId,
        surface: String,
        definition: String,
    },
    SubTaskFinished {
        subtask: SubTaskId,
        outcome: Outcome,
        elapsed_secs: f64,
        failure: Option<FailureKind>,
        reason: Option<String>,
    },
}

impl EventBody {
    pub fn kind(&self) -> EventKind {
        match self {
            EventBody::SubTaskStarted { .. } => EventKind::SubTaskStarted,
            EventBody::Classified { .. } => EventKind::Classified,
            EventBody::PromptSent { .. } => EventKind::PromptSent,
            EventBody::ResponseReceived { .. } => EventKind::ResponseReceived,
            EventBody::LintRun { .. } => EventKind::LintRun,
            EventBody::CodeRun { .. } => EventKind::CodeRun,
            EventBody::RepairRequested { .. } => EventKind::RepairRequested,
            EventBody::KeywordDefined { .. } => EventKind::KeywordDefined,
            EventBody::SubTaskFinished { .. } => EventKind::SubTaskFinished,
        }
    }

    pub fn subtask(&self) -> SubTaskId {
        match self {
            EventBody::SubTaskStarted { subtask, .. }
            | EventBody::Classified { subtask, .. }
            | EventBody::PromptSent { subtask, .. }
            | EventBody::ResponseReceived { subtask, .. }
            | EventBody::LintRun { subtask, .. }
            | EventBody::CodeRun { subtask, .. }
            | EventBody::RepairRequested { subtask, .. }
            | EventBody::KeywordDefined { subtask, .. }
            | EventBody::SubTaskFinished { subtask, .. } => *subtask,
        }
    }
}

/// One transcript record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub ts_ms: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

impl SessionEvent {
    pub fn kind(&self) -> EventKind {
        self.body.kind()
    }
}

pub type EventObserver = Arc<dyn Fn(&SessionEvent) + Send + Sync>;

/// Callback run after each appended event. Not part of the session state, so
/// it is skipped by serialization and ignored by equality.
#[derive(Clone, Default)]
struct Observer(Option<EventObserver>);

impl fmt::Debug for Observer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.0.is_some() {
            "Observer(set)"
        } else {
            "Observer(none)"
        })
    }
}

impl PartialEq for Observer {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

/// Everything about a session that is not derived from its events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub id: String,
    pub scenario: Option<ScenarioSpec>,
    pub config: EngineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub scenario: Option<ScenarioSpec>,
    pub config: EngineConfig,
    subtasks: Vec<SubTask>,
    events: Vec<SessionEvent>,
    #[serde(skip)]
    observer: Observer,
}

fn invalid(msg: impl Into<String>) -> SessionError {
    SessionError::InvalidEvent(msg.into())
}

impl Session {
    pub fn new(scenario: Option<ScenarioSpec>, config: EngineConfig) -> Result<Self, SessionError> {
        Self::with_id(uuid::Uuid::new_v4().to_string(), scenario, config)
    }

    pub fn with_id(
        id: impl Into<String>,
        scenario: Option<ScenarioSpec>,
        config: EngineConfig,
    ) -> Result<Self, SessionError> {
        config.validate()?;
        Ok(Session {
            id: id.into(),
            scenario,
            config,
            subtasks: Vec::new(),
            events: Vec::new(),
            observer: Observer::default(),
        })
    }

    /// Rebuilds a session by folding `events` over a fresh state.
    pub fn replay(
        header: SessionHeader,
        events: impl IntoIterator<Item = SessionEvent>,
    ) -> Result<Self, SessionError> {
        let mut s = Session::with_id(header.id, header.scenario, header.config)?;
        for e in events {
            s.append_event(e)?;
        }
        Ok(s)
    }

    pub fn header(&self) -> SessionHeader {
        SessionHeader {
            id: self.id.clone(),
            scenario: self.scenario.clone(),
            config: self.config.clone(),
        }
    }

    pub fn set_observer(&mut self, observer: Option<EventObserver>) {
        self.observer = Observer(observer);
    }

    pub fn subtasks(&self) -> &[SubTask] {
        &self.subtasks
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    pub fn last_seq(&self) -> u64 {
        self.events.last().map_or(0, |e| e.seq)
    }

    pub fn subtask(&self, id: SubTaskId) -> Result<&SubTask, SessionError> {
        id.checked_sub(1)
            .and_then(|i| self.subtasks.get(i as usize))
            .ok_or(SessionError::UnknownSubTask(id))
    }

    fn subtask_mut(&mut self, id: SubTaskId) -> Result<&mut SubTask, SessionError> {
        id.checked_sub(1)
            .and_then(|i| self.subtasks.get_mut(i as usize))
            .ok_or(SessionError::UnknownSubTask(id))
    }

    /// The subtask that has started but not finished, if any.
    pub fn open_subtask(&self) -> Option<&SubTask> {
        self.subtasks.iter().find(|t| !t.status.is_terminal())
    }

    pub fn in_progress(&self) -> Option<&SubTask> {
        self.subtasks
            .iter()
            .find(|t| t.status == SubTaskStatus::InProgress)
    }

    pub fn last_subtask(&self) -> Option<&SubTask> {
        self.subtasks.last()
    }

    /// Final code of the most recent completed coding subtask.
    pub fn last_completed_code(&self) -> Option<(SubTaskId, &str)> {
        self.subtasks
            .iter()
            .rev()
            .find_map(|t| match (&t.status, t.code()) {
                (SubTaskStatus::Completed, Some(c)) => Some((t.id, c.code.as_str())),
                _ => None,
            })
    }

    /// True when every subtask has completed.
    pub fn is_solved(&self) -> bool {
        !self.subtasks.is_empty()
            && self
                .subtasks
                .iter()
                .all(|t| t.status == SubTaskStatus::Completed)
    }

    pub fn append_event(&mut self, event: SessionEvent) -> Result<(), SessionError> {
        let expected = self.last_seq() + 1;
        if event.seq != expected {
            return Err(SessionError::SequenceGap {
                expected,
                got: event.seq,
            });
        }
        if let Some(last) = self.events.last() {
            if event.ts_ms < last.ts_ms {
                return Err(SessionError::TimeWentBackwards {
                    last: last.ts_ms,
                    got: event.ts_ms,
                });
            }
        }
        self.apply(&event.body, event.ts_ms)?;
        self.events.push(event);
        if let Some(observer) = &self.observer.0 {
            observer(self.events.last().expect("just pushed"));
        }
        Ok(())
    }

    /// Stamps `body` with the next sequence number and the current time and
    /// appends it.
    pub fn record(
        &mut self,
        clock: &dyn Clock,
        body: EventBody,
    ) -> Result<&SessionEvent, SessionError> {
        let last_ts = self.events.last().map_or(0, |e| e.ts_ms);
        let event = SessionEvent {
            seq: self.last_seq() + 1,
            ts_ms: clock.now_ms().max(last_ts),
            body,
        };
        self.append_event(event)?;
        Ok(self.events.last().expect("just appended"))
    }

    pub fn start_subtask(
        &mut self,
        clock: &dyn Clock,
        text: &str,
        followup_of: Option<SubTaskId>,
    ) -> Result<SubTaskId, SessionError> {
        let subtask = self.subtasks.len() as SubTaskId + 1;
        self.record(
            clock,
            EventBody::SubTaskStarted {
                subtask,
                text: text.trim().to_string(),
                followup_of,
            },
        )?;
        Ok(subtask)
    }

    /// Ends an in-progress subtask. A completion reported after the
    /// configured timeout is recorded as timed out instead.
    pub fn finish_subtask(
        &mut self,
        clock: &dyn Clock,
        id: SubTaskId,
        outcome: Outcome,
        elapsed_secs: f64,
        failure: Option<FailureKind>,
        reason: Option<String>,
    ) -> Result<(), SessionError> {
        let (outcome, failure, reason) =
            if outcome == Outcome::Completed && elapsed_secs > self.config.subtask_timeout_secs {
                (
                    Outcome::TimedOut,
                    Some(FailureKind::Deadline),
                    Some(format!(
                        "elapsed {elapsed_secs:.1} s exceeds the {} s limit",
                        self.config.subtask_timeout_secs
                    )),
                )
            } else {
                (outcome, failure, reason)
            };
        self.record(
            clock,
            EventBody::SubTaskFinished {
                subtask: id,
                outcome,
                elapsed_secs,
                failure,
                reason,
            },
        )?;
        Ok(())
    }

    fn check_exchange(t: &SubTask, template: TemplateId) -> Result<(), SessionError> {
        if template == TemplateId::KeywordDefine {
            if t.kind != SubTaskKind::Concept || t.concept().is_none() {
                return Err(invalid(format!("subtask {} has no concept answer", t.id)));
            }
        } else if t.status != SubTaskStatus::InProgress {
            return Err(invalid(format!("subtask {} is not in progress", t.id)));
        }
        Ok(())
    }

    fn apply(&mut self, body: &EventBody, ts_ms: u64) -> Result<(), SessionError> {
        match body {
            EventBody::SubTaskStarted {
                subtask,
                text,
                followup_of,
            } => {
                if let Some(open) = self.open_subtask() {
                    return Err(SessionError::Busy(open.id));
                }
                if text.trim().is_empty() {
                    return Err(SessionError::EmptyQuestion);
                }
                let expected = self.subtasks.len() as SubTaskId + 1;
                if *subtask != expected {
                    return Err(invalid(format!(
                        "subtask id {subtask}, expected {expected}"
                    )));
                }
                if followup_of.is_some_and(|p| p == 0 || p >= *subtask) {
                    return Err(invalid("follow-up must refer to an earlier subtask"));
                }
                self.subtasks.push(SubTask {
                    id: *subtask,
                    text: text.clone(),
                    kind: SubTaskKind::Unclassified,
                    status: SubTaskStatus::Pending,
                    elapsed_secs: 0.0,
                    started_ms: ts_ms,
                    p_code: None,
                    followup_of: *followup_of,
                    answer: None,
                    llm_calls: 0,
                    lint_iters: 0,
                    runtime_iters: 0,
                    trace: Vec::new(),
                    no_progress: false,
                    failure: None,
                    reason: None,
                });
            }
            EventBody::Classified {
                subtask,
                kind,
                p_code,
            } => {
                let t = self.subtask_mut(*subtask)?;
                if t.status != SubTaskStatus::Pending {
                    return Err(SessionError::IllegalTransition {
                        subtask: *subtask,
                        from: t.status,
                        to: SubTaskStatus::InProgress,
                    });
                }
                if *kind == SubTaskKind::Unclassified {
                    return Err(invalid("classification must name a kind"));
                }
                t.kind = *kind;
                t.p_code = *p_code;
                t.status = SubTaskStatus::InProgress;
            }
            EventBody::PromptSent {
                subtask,
                template,
                messages,
            } => {
                Self::check_exchange(self.subtask(*subtask)?, *template)?;
                if messages.is_empty() {
                    return Err(invalid("prompt has no messages"));
                }
            }
            EventBody::ResponseReceived {
                subtask,
                template,
                answer,
                ..
            } => {
                let t = self.subtask_mut(*subtask)?;
                Self::check_exchange(t, *template)?;
                match answer {
                    Some(AnswerUpdate::Concept(_)) if t.kind != SubTaskKind::Concept => {
                        return Err(invalid("concept answer for a coding subtask"));
                    }
                    Some(AnswerUpdate::Code { code, .. }) => {
                        if t.kind != SubTaskKind::Code {
                            return Err(invalid("code answer for a concept subtask"));
                        }
                        if code.trim().is_empty() {
                            return Err(invalid("empty code"));
                        }
                    }
                    _ => {}
                }
                t.llm_calls += 1;
                match answer.clone() {
                    Some(AnswerUpdate::Concept(c)) => t.answer = Some(Answer::Concept(c)),
                    Some(AnswerUpdate::Code { code, related }) => match &mut t.answer {
                        Some(Answer::Code(existing)) => {
                            existing.code = code;
                            if let Some(r) = related {
                                existing.related = r;
                            }
                            existing.revision += 1;
                            existing.lint = None;
                            existing.run = None;
                        }
                        _ => {
                            t.answer = Some(Answer::Code(CodeAnswer {
                                code,
                                related: related.unwrap_or_default(),
                                lint: None,
                                run: None,
                                revision: 0,
                            }))
                        }
                    },
                    None => {}
                }
                if template.is_repair() && answer.is_some() {
                    close_open_step(t);
                }
            }
            EventBody::LintRun {
                subtask,
                revision,
                report,
            } => {
                let t = self.subtask_mut(*subtask)?;
                let current = current_code(t, *revision)?;
                if let Some(step) = t.trace.last_mut() {
                    if step.code_after.as_deref() == Some(current.as_str()) {
                        step.report_after = Some(StepReport::Lint(report.clone()));
                    }
                }
                if let Some(Answer::Code(c)) = &mut t.answer {
                    c.lint = Some(report.clone());
                    c.run = None;
                }
            }
            EventBody::CodeRun {
                subtask,
                revision,
                report,
            } => {
                let t = self.subtask_mut(*subtask)?;
                let current = current_code(t, *revision)?;
                if let Some(step) = t.trace.last_mut() {
                    if step.code_after.as_deref() == Some(current.as_str()) {
                        step.report_after = Some(StepReport::Run(report.clone()));
                    }
                }
                if let Some(Answer::Code(c)) = &mut t.answer {
                    c.run = Some(report.clone());
                }
            }
            EventBody::RepairRequested {
                subtask,
                trigger,
                q_buildup,
                target,
                code_before,
            } => {
                let t = self.subtask_mut(*subtask)?;
                if t.status != SubTaskStatus::InProgress {
                    return Err(invalid(format!("subtask {subtask} is not in progress")));
                }
                let Some(current) = t.code() else {
                    return Err(invalid("repair requested without code"));
                };
                if current.code != *code_before {
                    return Err(invalid("repair must start from the current code"));
                }
                if q_buildup.trim().is_empty() {
                    return Err(invalid("empty buildup prompt"));
                }
                close_open_step(t);
                match trigger {
                    RepairTrigger::Lint => t.lint_iters += 1,
                    RepairTrigger::Runtime | RepairTrigger::UserRequest => t.runtime_iters += 1,
                }
                t.trace.push(RepairStep {
                    trigger: *trigger,
                    q_buildup: q_buildup.clone(),
                    target: target.clone(),
                    code_before: code_before.clone(),
                    code_after: None,
                    report_after: None,
                    no_progress: false,
                });
            }
            EventBody::KeywordDefined {
                subtask,
                surface,
                definition,
            } => {
                let t = self.subtask_mut(*subtask)?;
                if definition.trim().is_empty() {
                    return Err(invalid("empty definition"));
                }
                let Some(Answer::Concept(c)) = &mut t.answer else {
                    return Err(invalid(format!("subtask {subtask} has no concept answer")));
                };
                let Some(k) = c
                    .keywords
                    .iter_mut()
                    .find(|k| k.surface.eq_ignore_ascii_case(surface))
                else {
                    return Err(invalid(format!("unknown keyword {surface:?}")));
                };
                k.definition = Some(definition.clone());
            }
            EventBody::SubTaskFinished {
                subtask,
                outcome,
                elapsed_secs,
                failure,
                reason,
            } => {
                let t = self.subtask_mut(*subtask)?;
                if t.status != SubTaskStatus::InProgress {
                    return Err(SessionError::IllegalTransition {
                        subtask: *subtask,
                        from: t.status,
                        to: outcome.status(),
                    });
                }
                if !(elapsed_secs.is_finite() && *elapsed_secs >= 0.0) {
                    return Err(invalid("elapsed time must be finite and non-negative"));
                }
                if *outcome == Outcome::Completed {
                    if failure.is_some() {
                        return Err(invalid("completed subtask cannot carry a failure"));
                    }
                    if t.kind == SubTaskKind::Code && !t.code().is_some_and(CodeAnswer::lint_passed)
                    {
                        return Err(invalid(
                            "completed coding subtask needs a passing lint report",
                        ));
                    }
                }
                close_open_step(t);
                t.status = outcome.status();
                t.elapsed_secs = *elapsed_secs;
                t.failure = *failure;
                t.reason = reason.clone();
            }
        }
        Ok(())
    }
}

fn current_code(t: &SubTask, revision: u32) -> Result<String, SessionError> {
    if t.status != SubTaskStatus::InProgress {
        return Err(invalid(format!("subtask {} is not in progress", t.id)));
    }
    match t.code() {
        Some(c) if c.revision == revision => Ok(c.code.clone()),
        Some(c) => Err(invalid(format!(
            "report for revision {revision}, current revision is {}",
            c.revision
        ))),
        None => Err(invalid("verification without code")),
    }
}

/// Closes the newest repair step with the current code. A step whose reply
/// changed nothing is marked as making no progress.
fn close_open_step(t: &mut SubTask) {
    let current = t.code().map(|c| c.code.clone());
    if let (Some(step), Some(code)) = (t.trace.last_mut(), current) {
        if step.code_after.is_none() {
            step.no_progress = step.code_before == code;
            step.code_after = Some(code);
            if step.no_progress {
                t.no_progress = true;
            }
        }
    }
}

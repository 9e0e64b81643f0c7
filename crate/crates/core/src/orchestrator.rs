//! Drives subtasks through routing, the concept and coding chains, and the
//! bounded buildup loops.
//!
//! Every step is recorded on the session before or after it happens, so the
//! session's event log is a complete trace of the run.

use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::clock::Clock;
use crate::gateway::{ChatBackend, GatewayError};
use crate::prompt::{
    PromptEngine, PromptError, RenderedPrompt, ReplyError, ReplyKind, RuntimeMode, StructuredReply,
};
use crate::router::{Route, Router};
use crate::session::{
    AnswerUpdate, EventBody, FailureKind, Keyword, Outcome, RepairTrigger, Session, SessionError,
    SubTask, SubTaskId, SubTaskKind, SubTaskStatus,
};
use crate::verifier::{LintMessage, LintReport, RunReport, RunVerdict, Verifier, VerifyError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("no completed coding subtask to build on")]
    NoPriorCode,
    #[error("no subtask is in progress")]
    NothingInProgress,
    #[error("subtask {0} has no code")]
    NoCode(SubTaskId),
    #[error("subtask {0} has no concept answer")]
    NoConcept(SubTaskId),
    #[error("unknown keyword {0:?}")]
    UnknownKeyword(String),
    #[error("lint message is not part of the current report")]
    UnknownLintMessage,
    #[error("nothing to repair: the current code passes lint")]
    NothingToRepair,
    #[error("{0} repair budget is spent")]
    BudgetSpent(&'static str),
    #[error("subtask {0} cannot be accepted: {1}")]
    NotAcceptable(SubTaskId, String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Reply(#[from] ReplyError),
}

/// Why a workflow stopped early. `Fail` ends the subtask; `Fatal` is a
/// caller or state error and leaves the subtask as it was.
enum Stop {
    Fail(FailureKind, String),
    Fatal(EngineError),
}

impl From<SessionError> for Stop {
    fn from(e: SessionError) -> Self {
        Stop::Fatal(e.into())
    }
}

impl From<PromptError> for Stop {
    fn from(e: PromptError) -> Self {
        Stop::Fail(FailureKind::Prompt, e.to_string())
    }
}

impl From<VerifyError> for Stop {
    fn from(e: VerifyError) -> Self {
        Stop::Fail(FailureKind::Verifier, e.to_string())
    }
}

type Flow<T> = Result<T, Stop>;

/// How a new subtask relates to the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Chain {
    /// Standalone question.
    None,
    /// Coding follow-ups build on the last completed code when there is one.
    Auto,
    /// Always build on the last completed code.
    Forced,
}

/// A user-driven repair of the open coding subtask.
#[derive(Debug, Clone, PartialEq)]
pub enum RepairRequest {
    /// Fix one lint message; `None` picks the first by position.
    Lint(Option<LintMessage>),
    /// "How to fix {err}?" or "I want to {req}."
    Runtime { mode: RuntimeMode, text: String },
}

pub struct Engine {
    backend: Arc<dyn ChatBackend>,
    router: Arc<dyn Router>,
    prompts: Arc<PromptEngine>,
    verifier: Arc<Verifier>,
    clock: Arc<dyn Clock>,
}

impl Engine {
    pub fn new(
        backend: Arc<dyn ChatBackend>,
        router: Arc<dyn Router>,
        prompts: Arc<PromptEngine>,
        verifier: Arc<Verifier>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Engine {
            backend,
            router,
            prompts,
            verifier,
            clock,
        }
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn prompts(&self) -> &PromptEngine {
        &self.prompts
    }

    /// Runs `question` as a new standalone subtask. Returns its id; the
    /// subtask is finished unless the session waits for an explicit accept.
    pub fn handle_subtask(
        &self,
        s: &mut Session,
        question: &str,
    ) -> Result<SubTaskId, EngineError> {
        self.submit(s, question, Chain::None)
    }

    /// Runs `question` as the next step after the previous subtask. Coding
    /// questions, or any question when `force` is set, are generated as a
    /// buildup of the last completed code.
    pub fn followup_buildup(
        &self,
        s: &mut Session,
        question: &str,
        force: bool,
    ) -> Result<SubTaskId, EngineError> {
        self.submit(s, question, if force { Chain::Forced } else { Chain::Auto })
    }

    fn submit(
        &self,
        s: &mut Session,
        question: &str,
        chain: Chain,
    ) -> Result<SubTaskId, EngineError> {
        if let Some(open) = s.open_subtask() {
            return Err(SessionError::Busy(open.id).into());
        }
        if question.trim().is_empty() {
            return Err(SessionError::EmptyQuestion.into());
        }
        let prior = match chain {
            Chain::None => None,
            _ => s.last_completed_code().map(|(_, code)| code.to_string()),
        };
        if chain == Chain::Forced && prior.is_none() {
            return Err(EngineError::NoPriorCode);
        }
        let followup_of = match chain {
            Chain::None => None,
            _ => s.last_subtask().map(|t| t.id),
        };
        let id = s.start_subtask(self.clock.as_ref(), question, followup_of)?;
        let route = self.router.route(question).unwrap_or_else(|e| {
            tracing::warn!("routing failed, using the concept workflow: {e}");
            Route {
                kind: SubTaskKind::Concept,
                p_code: None,
            }
        });
        let kind = if chain == Chain::Forced {
            SubTaskKind::Code
        } else {
            route.kind
        };
        s.record(
            self.clock.as_ref(),
            EventBody::Classified {
                subtask: id,
                kind,
                p_code: route.p_code,
            },
        )?;
        let text = s.subtask(id)?.text.clone();
        let result = match kind {
            SubTaskKind::Code => self.code_flow(s, id, &text, prior.as_deref()),
            _ => self.concept_flow(s, id, &text),
        };
        self.settle(s, id, result)?;
        Ok(id)
    }

    /// Finishes the subtask after a workflow: failures end it, and success
    /// completes it when the session auto-accepts.
    fn settle(&self, s: &mut Session, id: SubTaskId, result: Flow<()>) -> Result<(), EngineError> {
        match result {
            Ok(()) => {
                if s.config.auto_accept_on_pass {
                    let t = s.subtask(id)?;
                    match acceptance_problem(t) {
                        None => self.finish(s, id, Outcome::Completed, None, None)?,
                        Some(why) => self.finish(
                            s,
                            id,
                            Outcome::Failed,
                            Some(FailureKind::Verifier),
                            Some(why),
                        )?,
                    }
                }
                Ok(())
            }
            Err(Stop::Fail(kind, reason)) => {
                let outcome = if kind == FailureKind::Deadline {
                    Outcome::TimedOut
                } else {
                    Outcome::Failed
                };
                self.finish(s, id, outcome, Some(kind), Some(reason))?;
                Ok(())
            }
            Err(Stop::Fatal(e)) => Err(e),
        }
    }

    fn finish(
        &self,
        s: &mut Session,
        id: SubTaskId,
        outcome: Outcome,
        failure: Option<FailureKind>,
        reason: Option<String>,
    ) -> Result<(), SessionError> {
        let started = s.subtask(id)?.started_ms;
        let elapsed = self.clock.now_ms().saturating_sub(started) as f64 / 1000.0;
        s.finish_subtask(self.clock.as_ref(), id, outcome, elapsed, failure, reason)
    }

    /// Accepts the open subtask's answer as final.
    pub fn accept(&self, s: &mut Session) -> Result<SubTaskId, EngineError> {
        let t = s.in_progress().ok_or(EngineError::NothingInProgress)?;
        let id = t.id;
        if let Some(why) = acceptance_problem(t) {
            return Err(EngineError::NotAcceptable(id, why));
        }
        self.finish(s, id, Outcome::Completed, None, None)?;
        Ok(id)
    }

    /// Gives up on the open subtask.
    pub fn reject(&self, s: &mut Session, reason: &str) -> Result<SubTaskId, EngineError> {
        let id = s.in_progress().ok_or(EngineError::NothingInProgress)?.id;
        self.finish(
            s,
            id,
            Outcome::Failed,
            Some(FailureKind::Rejected),
            Some(reason.to_string()),
        )?;
        Ok(id)
    }

    /// Applies a user-chosen repair to the open coding subtask. Budget
    /// exhaustion or a hard failure ends the subtask; the subtask id is
    /// returned either way.
    pub fn repair(
        &self,
        s: &mut Session,
        request: RepairRequest,
    ) -> Result<SubTaskId, EngineError> {
        let t = s.in_progress().ok_or(EngineError::NothingInProgress)?;
        let id = t.id;
        let code = t.code().ok_or(EngineError::NoCode(id))?;
        let result = match request {
            RepairRequest::Lint(target) => {
                let report = code.lint.as_ref().ok_or(EngineError::NoCode(id))?;
                if report.passed() {
                    return Err(EngineError::NothingToRepair);
                }
                if target
                    .as_ref()
                    .is_some_and(|m| !report.messages().contains(m))
                {
                    return Err(EngineError::UnknownLintMessage);
                }
                if t.lint_iters >= s.config.max_lint_iters {
                    return Err(EngineError::BudgetSpent("lint"));
                }
                let steps = (!s.config.auto_lint_repair).then_some(1);
                self.repair_lint_loop(s, id, target, steps)
                    .and_then(|()| self.run_after_lint(s, id))
            }
            RepairRequest::Runtime { mode, text } => {
                if text.trim().is_empty() {
                    return Err(PromptError::EmptyInput("error or request").into());
                }
                if !code.lint_passed() {
                    return Err(EngineError::NotAcceptable(
                        id,
                        "the code must pass lint first".into(),
                    ));
                }
                if t.runtime_iters >= s.config.max_runtime_iters {
                    return Err(EngineError::BudgetSpent("runtime"));
                }
                self.repair_runtime(s, id, mode, &text)
            }
        };
        self.settle(s, id, result)?;
        Ok(id)
    }

    /// Asks for a definition of one keyword of a concept answer and stores
    /// it. Calling again replaces the definition.
    pub fn define_keyword(
        &self,
        s: &mut Session,
        id: SubTaskId,
        surface: &str,
    ) -> Result<Keyword, EngineError> {
        let t = s.subtask(id)?;
        let concept = t.concept().ok_or(EngineError::NoConcept(id))?;
        let keyword = concept
            .keyword(surface)
            .cloned()
            .ok_or_else(|| EngineError::UnknownKeyword(surface.to_string()))?;
        let prompt = self
            .prompts
            .render_keyword_define(&keyword, &concept.explanation)?;
        self.send(s, id, &prompt)?;
        let limit = Duration::from_secs_f64(s.config.subtask_timeout_secs);
        let completion = match self.backend.complete(&prompt, Some(limit)) {
            Ok(c) => c,
            Err(e) => {
                self.receive_failure(s, id, &prompt, &e)?;
                return Err(e.into());
            }
        };
        let parsed = self
            .prompts
            .parse_reply(&completion.text, ReplyKind::DefinitionOnly, prompt.style)
            .and_then(|r| {
                let d = r
                    .definition()
                    .map(str::trim)
                    .unwrap_or_default()
                    .to_string();
                if d.is_empty() {
                    Err(ReplyError::ParseFailure {
                        section: "definition".into(),
                        detail: "empty".into(),
                    })
                } else {
                    Ok((d, r.warnings))
                }
            });
        let (definition, warnings, error) = match parsed {
            Ok((d, w)) => (Some(d), w, None),
            Err(e) => (None, Vec::new(), Some(e)),
        };
        s.record(
            self.clock.as_ref(),
            EventBody::ResponseReceived {
                subtask: id,
                template: prompt.template,
                text: Some(completion.text),
                usage: completion.usage,
                attempts: completion.attempts,
                answer: None,
                warnings,
                error: error.as_ref().map(ToString::to_string),
            },
        )?;
        if let Some(e) = error {
            return Err(e.into());
        }
        let definition = definition.expect("checked above");
        s.record(
            self.clock.as_ref(),
            EventBody::KeywordDefined {
                subtask: id,
                surface: keyword.surface.clone(),
                definition: definition.clone(),
            },
        )?;
        Ok(Keyword {
            surface: keyword.surface,
            definition: Some(definition),
        })
    }

    fn concept_flow(&self, s: &mut Session, id: SubTaskId, question: &str) -> Flow<()> {
        let context = concept_context(s, id, s.config.context_depth);
        let prompt = self
            .prompts
            .render_concept_with_context(question, &context)?;
        self.exchange(s, id, prompt, ReplyKind::ConceptSections, |reply| {
            let (answer, warnings) = self.prompts.concept_answer(reply)?;
            Ok((Some(AnswerUpdate::Concept(answer)), warnings))
        })
    }

    fn code_flow(
        &self,
        s: &mut Session,
        id: SubTaskId,
        question: &str,
        prior: Option<&str>,
    ) -> Flow<()> {
        let (prompt, expected) = match prior {
            Some(code) => (
                self.prompts.render_buildup_chain(question, code)?,
                ReplyKind::CodeOnly,
            ),
            None => {
                let context = concept_context(s, id, s.config.context_depth);
                (
                    self.prompts.render_code_with_context(question, &context)?,
                    ReplyKind::CodeSections,
                )
            }
        };
        self.exchange(s, id, prompt, expected, |reply| {
            let code = reply.code.clone().ok_or(ReplyError::EmptyCodeBlock)?;
            let related = (expected == ReplyKind::CodeSections).then(|| reply.related.clone());
            Ok((Some(AnswerUpdate::Code { code, related }), Vec::new()))
        })?;
        self.lint(s, id)?;
        self.auto_lint_repair(s, id)?;
        self.run_after_lint(s, id)
    }

    /// Runs the lint loop unless the session leaves lint repairs to the user.
    fn auto_lint_repair(&self, s: &mut Session, id: SubTaskId) -> Flow<()> {
        if s.config.auto_lint_repair {
            self.repair_lint_loop(s, id, None, None)?;
        }
        Ok(())
    }

    /// Runs passing code when configured, and under auto-accept repairs
    /// runtime failures straight away.
    fn run_after_lint(&self, s: &mut Session, id: SubTaskId) -> Flow<()> {
        let passed = s.subtask(id)?.code().is_some_and(|c| c.lint_passed());
        if !s.config.run_code || !passed {
            return Ok(());
        }
        let report = self.run(s, id)?;
        if s.config.auto_accept_on_pass {
            if let Some(problem) = report.problem() {
                return self.repair_runtime(s, id, RuntimeMode::Fix, &problem);
            }
        }
        Ok(())
    }

    /// Buildup on lint messages until the code passes, the budget is spent
    /// or `max_steps` iterations have run. `target` is used for the first
    /// iteration when it is still in the report.
    fn repair_lint_loop(
        &self,
        s: &mut Session,
        id: SubTaskId,
        mut target: Option<LintMessage>,
        max_steps: Option<u32>,
    ) -> Flow<()> {
        let mut steps = 0;
        loop {
            if max_steps.is_some_and(|m| steps >= m) {
                return Ok(());
            }
            steps += 1;
            let t = s.subtask(id)?;
            let code = t.code().ok_or(Stop::Fatal(EngineError::NoCode(id)))?;
            let report = code
                .lint
                .clone()
                .ok_or(Stop::Fatal(EngineError::NoCode(id)))?;
            if report.passed() {
                return Ok(());
            }
            if t.lint_iters >= s.config.max_lint_iters {
                return Err(exhausted(t, "lint", &report));
            }
            let message = target
                .take()
                .filter(|m| report.messages().contains(m))
                .unwrap_or_else(|| report.messages()[0].clone());
            let code_before = code.code.clone();
            let prompt = self.prompts.render_buildup_lint(&message, &code_before)?;
            s.record(
                self.clock.as_ref(),
                EventBody::RepairRequested {
                    subtask: id,
                    trigger: RepairTrigger::Lint,
                    q_buildup: prompt.user_content().to_string(),
                    target: Some(message),
                    code_before,
                },
            )?;
            self.exchange_code_only(s, id, prompt)?;
            self.lint(s, id)?;
        }
    }

    /// Buildup on a runtime error or a feature request. The new code must
    /// pass lint again; fixes are re-run until the run succeeds or the
    /// budget is spent, while requests only need the lint pass.
    fn repair_runtime(
        &self,
        s: &mut Session,
        id: SubTaskId,
        mode: RuntimeMode,
        text: &str,
    ) -> Flow<()> {
        let mut text = text.to_string();
        loop {
            let t = s.subtask(id)?;
            if t.runtime_iters >= s.config.max_runtime_iters {
                let last = t
                    .code()
                    .and_then(|c| c.run.as_ref())
                    .and_then(RunReport::problem);
                return Err(Stop::Fail(
                    FailureKind::LoopExhausted,
                    format!(
                        "runtime repair budget of {} spent{}{}",
                        s.config.max_runtime_iters,
                        last.map(|p| format!("; last problem: {p}"))
                            .unwrap_or_default(),
                        if t.no_progress { "; no progress" } else { "" }
                    ),
                ));
            }
            let code_before = t
                .code()
                .ok_or(Stop::Fatal(EngineError::NoCode(id)))?
                .code
                .clone();
            let prompt = self
                .prompts
                .render_buildup_runtime(&text, mode, &code_before)?;
            let trigger = match mode {
                RuntimeMode::Fix => RepairTrigger::Runtime,
                RuntimeMode::Request => RepairTrigger::UserRequest,
            };
            s.record(
                self.clock.as_ref(),
                EventBody::RepairRequested {
                    subtask: id,
                    trigger,
                    q_buildup: prompt.user_content().to_string(),
                    target: None,
                    code_before,
                },
            )?;
            self.exchange_code_only(s, id, prompt)?;
            self.lint(s, id)?;
            self.auto_lint_repair(s, id)?;
            if mode == RuntimeMode::Request
                || !s.subtask(id)?.code().is_some_and(|c| c.lint_passed())
            {
                return Ok(());
            }
            let report = self.run(s, id)?;
            match report.problem() {
                None => return Ok(()),
                Some(problem) => text = problem,
            }
        }
    }

    fn exchange_code_only(
        &self,
        s: &mut Session,
        id: SubTaskId,
        prompt: RenderedPrompt,
    ) -> Flow<()> {
        self.exchange(s, id, prompt, ReplyKind::CodeOnly, |reply| {
            let code = reply.code.clone().ok_or(ReplyError::EmptyCodeBlock)?;
            Ok((
                Some(AnswerUpdate::Code {
                    code,
                    related: None,
                }),
                Vec::new(),
            ))
        })
    }

    /// Time left before the subtask's deadline.
    fn remaining(&self, s: &Session, id: SubTaskId) -> Flow<Duration> {
        let t = s.subtask(id)?;
        let deadline = t.started_ms.saturating_add(s.config.timeout_ms());
        let now = self.clock.now_ms();
        if now >= deadline {
            return Err(deadline_stop(s));
        }
        Ok(Duration::from_millis(deadline - now))
    }

    fn send(
        &self,
        s: &mut Session,
        id: SubTaskId,
        prompt: &RenderedPrompt,
    ) -> Result<(), SessionError> {
        s.record(
            self.clock.as_ref(),
            EventBody::PromptSent {
                subtask: id,
                template: prompt.template,
                messages: prompt.messages.clone(),
            },
        )?;
        Ok(())
    }

    fn receive_failure(
        &self,
        s: &mut Session,
        id: SubTaskId,
        prompt: &RenderedPrompt,
        e: &GatewayError,
    ) -> Result<(), SessionError> {
        s.record(
            self.clock.as_ref(),
            EventBody::ResponseReceived {
                subtask: id,
                template: prompt.template,
                text: None,
                usage: None,
                attempts: 1,
                answer: None,
                warnings: Vec::new(),
                error: Some(e.to_string()),
            },
        )?;
        Ok(())
    }

    /// One prompt/reply round trip. A reply that cannot be used is asked for
    /// again once per subtask; the second unusable reply fails the subtask.
    fn exchange(
        &self,
        s: &mut Session,
        id: SubTaskId,
        mut prompt: RenderedPrompt,
        expected: ReplyKind,
        interpret: impl Fn(&StructuredReply) -> Result<(Option<AnswerUpdate>, Vec<String>), ReplyError>,
    ) -> Flow<()> {
        loop {
            let limit = self.remaining(s, id)?;
            self.send(s, id, &prompt)?;
            let completion = match self.backend.complete(&prompt, Some(limit)) {
                Ok(c) => c,
                Err(e) => {
                    self.receive_failure(s, id, &prompt, &e)?;
                    return Err(match e {
                        GatewayError::DeadlineExceeded => deadline_stop(s),
                        other => Stop::Fail(FailureKind::Backend, other.to_string()),
                    });
                }
            };
            let parsed = self
                .prompts
                .parse_reply(&completion.text, expected, prompt.style)
                .and_then(|reply| {
                    let (update, mut warnings) = interpret(&reply)?;
                    let mut all = reply.warnings;
                    all.append(&mut warnings);
                    Ok((update, all))
                });
            let (answer, warnings, error) = match parsed {
                Ok((update, warnings)) => (update, warnings, None),
                Err(e) => (None, Vec::new(), Some(e)),
            };
            let reask_available = !reask_used(s, id);
            s.record(
                self.clock.as_ref(),
                EventBody::ResponseReceived {
                    subtask: id,
                    template: prompt.template,
                    text: Some(completion.text),
                    usage: completion.usage,
                    attempts: completion.attempts,
                    answer,
                    warnings,
                    error: error.as_ref().map(ToString::to_string),
                },
            )?;
            match error {
                None => return Ok(()),
                Some(e) if reask_available => prompt = self.prompts.render_reask(&prompt, &e),
                Some(e) => return Err(Stop::Fail(FailureKind::ParseFailure, e.to_string())),
            }
        }
    }

    fn lint(&self, s: &mut Session, id: SubTaskId) -> Flow<LintReport> {
        let code = s
            .subtask(id)?
            .code()
            .ok_or(Stop::Fatal(EngineError::NoCode(id)))?
            .clone();
        let ws = self.verifier.write_workspace(&code.code)?;
        let report = self.verifier.lint(&ws)?;
        s.record(
            self.clock.as_ref(),
            EventBody::LintRun {
                subtask: id,
                revision: code.revision,
                report: report.clone(),
            },
        )?;
        Ok(report)
    }

    fn run(&self, s: &mut Session, id: SubTaskId) -> Flow<RunReport> {
        let code = s
            .subtask(id)?
            .code()
            .ok_or(Stop::Fatal(EngineError::NoCode(id)))?
            .clone();
        let wall =
            Duration::from_secs_f64(self.verifier.config().wall_secs).min(self.remaining(s, id)?);
        let ws = self.verifier.write_workspace(&code.code)?;
        let report = self.verifier.run_with_limit(&ws, wall)?;
        s.record(
            self.clock.as_ref(),
            EventBody::CodeRun {
                subtask: id,
                revision: code.revision,
                report: report.clone(),
            },
        )?;
        Ok(report)
    }
}

/// Why the subtask's current answer cannot be accepted, if it cannot.
fn acceptance_problem(t: &SubTask) -> Option<String> {
    if t.status != SubTaskStatus::InProgress {
        return Some(format!("status is {:?}", t.status));
    }
    match t.kind {
        SubTaskKind::Code => {
            let Some(code) = t.code() else {
                return Some("no code".into());
            };
            if !code.lint_passed() {
                return Some("the code does not pass lint".into());
            }
            // A run report always belongs to the current code, so a failed
            // run blocks acceptance. Feature requests leave no run behind.
            match &code.run {
                Some(run) if run.verdict != RunVerdict::Ok => {
                    Some(format!("the last run ended with {:?}", run.verdict))
                }
                _ => None,
            }
        }
        _ => t.concept().is_none().then(|| "no concept answer".into()),
    }
}

fn exhausted(t: &SubTask, what: &str, report: &LintReport) -> Stop {
    Stop::Fail(
        FailureKind::LoopExhausted,
        format!(
            "{what} repair budget of {} spent with {} message(s) left{}",
            t.lint_iters,
            report.messages().len(),
            if t.no_progress { "; no progress" } else { "" }
        ),
    )
}

fn deadline_stop(s: &Session) -> Stop {
    Stop::Fail(
        FailureKind::Deadline,
        format!(
            "exceeded the {} s subtask limit",
            s.config.subtask_timeout_secs
        ),
    )
}

/// Whether the subtask already had a reply that could not be used.
fn reask_used(s: &Session, id: SubTaskId) -> bool {
    s.events().iter().any(|e| {
        matches!(
            &e.body,
            EventBody::ResponseReceived { subtask, text: Some(_), error: Some(_), template, .. }
                if *subtask == id && *template != crate::prompt::TemplateId::KeywordDefine
        )
    })
}

/// Explanations of the latest completed concept subtasks before `id`,
/// oldest first.
fn concept_context(s: &Session, id: SubTaskId, depth: usize) -> Vec<String> {
    let mut out: Vec<String> = s
        .subtasks()
        .iter()
        .rev()
        .filter(|t| t.id < id && t.status == SubTaskStatus::Completed)
        .filter_map(|t| t.concept().map(|c| c.explanation.clone()))
        .take(depth)
        .collect();
    out.reverse();
    out
}

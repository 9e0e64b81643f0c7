use serde::{Deserialize, Serialize};

use super::{Category, ScenarioSpec};
use crate::config::EngineConfig;
use crate::orchestrator::{Engine, EngineError};
use crate::session::{FailureKind, Outcome, Session, SessionError, SubTaskKind, SubTaskStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKind {
    AutoAcceptOnPass,
    Interactive,
}

impl JudgeKind {
    pub fn label(self) -> &'static str {
        match self {
            JudgeKind::AutoAcceptOnPass => "auto-accept on pass",
            JudgeKind::Interactive => "interactive",
        }
    }
}

/// A person deciding whether a verified answer solves its goal.
pub trait HumanJudge {
    fn accept(&mut self, scenario: &ScenarioSpec, goal_index: usize, session: &Session) -> bool;
}

pub enum Judge<'a> {
    AutoAcceptOnPass,
    Interactive(&'a mut dyn HumanJudge),
}

impl Judge<'_> {
    pub fn kind(&self) -> JudgeKind {
        match self {
            Judge::AutoAcceptOnPass => JudgeKind::AutoAcceptOnPass,
            Judge::Interactive(_) => JudgeKind::Interactive,
        }
    }
}

/// Outcome of one goal. `outcome` is `None` when the goal was never
/// attempted because its scenario was aborted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskRow {
    pub scenario: String,
    pub category: Category,
    /// 1-based position of the goal in its scenario.
    pub goal_index: usize,
    pub kind: Option<SubTaskKind>,
    pub outcome: Option<Outcome>,
    pub elapsed_secs: f64,
    pub llm_calls: u32,
    pub repair_iters: u32,
    pub failure: Option<FailureKind>,
}

impl SubtaskRow {
    fn skipped(spec: &ScenarioSpec, goal_index: usize) -> Self {
        SubtaskRow {
            scenario: spec.id.clone(),
            category: spec.category,
            goal_index,
            kind: None,
            outcome: None,
            elapsed_secs: 0.0,
            llm_calls: 0,
            repair_iters: 0,
            failure: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioAbort {
    pub scenario: String,
    pub goal_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub judge: JudgeKind,
    pub per_subtask: Vec<SubtaskRow>,
    pub aborted: Vec<ScenarioAbort>,
}

pub struct ScenarioRun {
    pub rows: Vec<SubtaskRow>,
    pub aborted: Option<ScenarioAbort>,
    pub session: Session,
}

/// Runs the goals of one scenario in order in a fresh session. A backend
/// failure or an engine error stops the scenario; later goals are recorded
/// as not attempted.
pub fn run_scenario(
    spec: &ScenarioSpec,
    engine: &Engine,
    config: &EngineConfig,
    judge: &mut Judge<'_>,
) -> Result<ScenarioRun, SessionError> {
    let config = EngineConfig {
        auto_accept_on_pass: matches!(judge, Judge::AutoAcceptOnPass),
        ..config.clone()
    };
    let mut session = Session::with_id(format!("bench-{}", spec.id), Some(spec.clone()), config)?;
    let mut rows = Vec::with_capacity(spec.goals.len());
    let mut aborted = None;
    for (i, goal) in spec.goals.iter().enumerate() {
        let goal_index = i + 1;
        if aborted.is_some() {
            rows.push(SubtaskRow::skipped(spec, goal_index));
            continue;
        }
        let submitted = if i == 0 {
            engine.handle_subtask(&mut session, goal)
        } else {
            engine.followup_buildup(&mut session, goal, false)
        };
        let result = submitted.and_then(|id| {
            if session.subtask(id)?.status == SubTaskStatus::InProgress {
                if let Judge::Interactive(human) = judge {
                    let accepted = human.accept(spec, goal_index, &session);
                    let accept = if accepted {
                        engine.accept(&mut session)
                    } else {
                        Err(EngineError::NothingInProgress)
                    };
                    if let Err(e) = accept {
                        let reason = if accepted {
                            e.to_string()
                        } else {
                            "rejected by the judge".to_string()
                        };
                        engine.reject(&mut session, &reason)?;
                    }
                }
            }
            Ok(id)
        });
        match result {
            Ok(id) => {
                let t = session.subtask(id)?;
                let outcome = match t.status {
                    SubTaskStatus::Completed => Some(Outcome::Completed),
                    SubTaskStatus::Failed => Some(Outcome::Failed),
                    SubTaskStatus::TimedOut => Some(Outcome::TimedOut),
                    _ => None,
                };
                rows.push(SubtaskRow {
                    scenario: spec.id.clone(),
                    category: spec.category,
                    goal_index,
                    kind: Some(t.kind),
                    outcome,
                    elapsed_secs: t.elapsed_secs,
                    llm_calls: t.llm_calls,
                    repair_iters: t.repair_iters(),
                    failure: t.failure,
                });
                if t.failure == Some(FailureKind::Backend) {
                    aborted = Some(ScenarioAbort {
                        scenario: spec.id.clone(),
                        goal_index,
                        reason: t.reason.clone().unwrap_or_default(),
                    });
                }
            }
            Err(e) => {
                tracing::warn!(scenario = %spec.id, goal_index, "scenario aborted: {e}");
                rows.push(SubtaskRow::skipped(spec, goal_index));
                aborted = Some(ScenarioAbort {
                    scenario: spec.id.clone(),
                    goal_index,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok(ScenarioRun {
        rows,
        aborted,
        session,
    })
}

/// Runs every scenario of `suite` one after another. Rows come back ordered
/// by (category, scenario id, goal index).
pub fn run_benchmark(
    suite: &[ScenarioSpec],
    engine: &Engine,
    config: &EngineConfig,
    mut judge: Judge<'_>,
) -> Result<BenchResult, SessionError> {
    let mut per_subtask = Vec::new();
    let mut aborted = Vec::new();
    for spec in suite {
        let run = run_scenario(spec, engine, config, &mut judge)?;
        per_subtask.extend(run.rows);
        aborted.extend(run.aborted);
    }
    per_subtask.sort_by(|a, b| {
        (a.category, &a.scenario, a.goal_index).cmp(&(b.category, &b.scenario, b.goal_index))
    });
    Ok(BenchResult {
        judge: judge.kind(),
        per_subtask,
        aborted,
    })
}

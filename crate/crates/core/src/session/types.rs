use serde::{Deserialize, Serialize};

use crate::verifier::{LintMessage, LintReport, LintVerdict, RunReport};

/// 1-based position of a subtask within its session.
pub type SubTaskId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubTaskKind {
    Unclassified,
    Concept,
    Code,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubTaskStatus {
    Pending,
    InProgress,
    Completed,
    Failed,
    TimedOut,
}

impl SubTaskStatus {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            SubTaskStatus::Completed | SubTaskStatus::Failed | SubTaskStatus::TimedOut
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Failed,
    TimedOut,
}

impl Outcome {
    pub fn status(self) -> SubTaskStatus {
        match self {
            Outcome::Completed => SubTaskStatus::Completed,
            Outcome::Failed => SubTaskStatus::Failed,
            Outcome::TimedOut => SubTaskStatus::TimedOut,
        }
    }
}

/// Why a subtask ended without completing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    ParseFailure,
    LoopExhausted,
    Backend,
    Verifier,
    Prompt,
    Rejected,
    Deadline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Keyword {
    pub surface: String,
    pub definition: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelatedQa {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptAnswer {
    pub explanation: String,
    pub keywords: Vec<Keyword>,
    pub related: Vec<RelatedQa>,
}

impl ConceptAnswer {
    pub fn keyword(&self, surface: &str) -> Option<&Keyword> {
        self.keywords
            .iter()
            .find(|k| k.surface.eq_ignore_ascii_case(surface.trim()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeAnswer {
    pub code: String,
    pub related: Vec<RelatedQa>,
    pub lint: Option<LintReport>,
    pub run: Option<RunReport>,
    /// Number of buildup replies applied since the first code.
    pub revision: u32,
}

impl CodeAnswer {
    pub fn lint_passed(&self) -> bool {
        self.lint
            .as_ref()
            .is_some_and(|l| l.verdict() == LintVerdict::Pass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Answer {
    Concept(ConceptAnswer),
    Code(CodeAnswer),
}

/// A change to the stored answer carried by a model response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AnswerUpdate {
    Concept(ConceptAnswer),
    Code {
        code: String,
        /// `None` keeps the related questions already stored.
        related: Option<Vec<RelatedQa>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairTrigger {
    Lint,
    Runtime,
    UserRequest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "report", rename_all = "snake_case")]
pub enum StepReport {
    Lint(LintReport),
    Run(RunReport),
}

/// One buildup iteration: the prompt sent and the code before and after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairStep {
    pub trigger: RepairTrigger,
    pub q_buildup: String,
    pub target: Option<LintMessage>,
    pub code_before: String,
    pub code_after: Option<String>,
    /// The latest verification of `code_after`.
    pub report_after: Option<StepReport>,
    pub no_progress: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubTask {
    pub id: SubTaskId,
    pub text: String,
    pub kind: SubTaskKind,
    pub status: SubTaskStatus,
    pub elapsed_secs: f64,
    pub started_ms: u64,
    /// Probability of the coding class reported by the router, if any.
    pub p_code: Option<f64>,
    pub followup_of: Option<SubTaskId>,
    pub answer: Option<Answer>,
    pub llm_calls: u32,
    pub lint_iters: u32,
    pub runtime_iters: u32,
    pub trace: Vec<RepairStep>,
    pub no_progress: bool,
    pub failure: Option<FailureKind>,
    pub reason: Option<String>,
}

impl SubTask {
    pub fn concept(&self) -> Option<&ConceptAnswer> {
        match &self.answer {
            Some(Answer::Concept(c)) => Some(c),
            _ => None,
        }
    }

    pub fn code(&self) -> Option<&CodeAnswer> {
        match &self.answer {
            Some(Answer::Code(c)) => Some(c),
            _ => None,
        }
    }

    pub fn repair_iters(&self) -> u32 {
        self.lint_iters + self.runtime_iters
    }
}

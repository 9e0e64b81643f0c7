//! The bundled scenario suite, the benchmark runner and its reports.

mod report;
mod run;
mod suite;

use thiserror::Error;

pub use report::{
    aggregate, emit_report, format_secs, suite_table, write_report, BenchReport, CategorySummary,
    Mean, ReportFormat, ScenarioSummary, AVERAGING_NOTE,
};
pub use run::{
    run_benchmark, run_scenario, BenchResult, HumanJudge, Judge, JudgeKind, ScenarioAbort,
    ScenarioRun, SubtaskRow,
};
pub use suite::{
    bundled_suite, check_against_reference, load_suite, validate_suite, Category, CategoryShape,
    ScenarioSpec, REFERENCE_SHAPE,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BenchError {
    #[error("{file}: {reason}")]
    Parse { file: String, reason: String },
    #[error("duplicate scenario id {0:?}")]
    DuplicateId(String),
    #[error("suite does not match the reference: {}", .0.join("; "))]
    SuiteMismatch(Vec<String>),
    #[error("benchmark result is empty")]
    EmptyResult,
    #[error("io failure: {0}")]
    Io(String),
}

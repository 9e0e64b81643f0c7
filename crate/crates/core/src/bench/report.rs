use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    BenchError, BenchResult, Category, CategoryShape, JudgeKind, ScenarioAbort, SubtaskRow,
};
use crate::session::Outcome;

/// Both averaging conventions side by side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mean {
    /// Over completed items only.
    pub completed: Option<f64>,
    /// Over every attempted item.
    pub all_attempts: Option<f64>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub id: String,
    pub category: Category,
    pub goals: usize,
    pub completed: usize,
    pub failed: usize,
    pub timed_out: usize,
    pub not_attempted: usize,
    /// Sum of the elapsed times of the attempted goals.
    pub total_secs: f64,
    /// Every goal completed.
    pub solved: bool,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub category: Category,
    pub scenarios: usize,
    pub subtasks: usize,
    pub subtasks_per_scenario: f64,
    pub attempted: usize,
    pub completed: usize,
    pub failed: usize,
    pub timed_out: usize,
    pub not_attempted: usize,
    pub solved_scenarios: usize,
    /// A scenario counts as completed when it is solved.
    pub time_per_scenario: Mean,
    pub time_per_subtask: Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub judge: JudgeKind,
    pub averaging: String,
    pub total_subtasks: usize,
    pub total_completed: usize,
    pub categories: Vec<CategorySummary>,
    pub scenarios: Vec<ScenarioSummary>,
    pub subtasks: Vec<SubtaskRow>,
}

pub const AVERAGING_NOTE: &str =
    "time means use completed items only (a scenario is completed when all its goals are); all-attempts means are given alongside";

/// Summarizes a run per scenario and per category.
pub fn aggregate(result: &BenchResult) -> Result<BenchReport, BenchError> {
    if result.per_subtask.is_empty() {
        return Err(BenchError::EmptyResult);
    }
    let mut rows = result.per_subtask.clone();
    rows.sort_by(|a, b| {
        (a.category, &a.scenario, a.goal_index).cmp(&(b.category, &b.scenario, b.goal_index))
    });

    let aborts: BTreeMap<&str, &ScenarioAbort> = result
        .aborted
        .iter()
        .map(|a| (a.scenario.as_str(), a))
        .collect();
    let mut scenarios: Vec<ScenarioSummary> = Vec::new();
    for row in &rows {
        if scenarios.last().is_none_or(|s| s.id != row.scenario) {
            scenarios.push(ScenarioSummary {
                id: row.scenario.clone(),
                category: row.category,
                goals: 0,
                completed: 0,
                failed: 0,
                timed_out: 0,
                not_attempted: 0,
                total_secs: 0.0,
                solved: false,
                aborted: aborts.get(row.scenario.as_str()).map(|a| a.reason.clone()),
            });
        }
        let s = scenarios.last_mut().expect("pushed above");
        s.goals += 1;
        match row.outcome {
            Some(Outcome::Completed) => s.completed += 1,
            Some(Outcome::Failed) => s.failed += 1,
            Some(Outcome::TimedOut) => s.timed_out += 1,
            None => s.not_attempted += 1,
        }
        if row.outcome.is_some() {
            s.total_secs += row.elapsed_secs;
        }
    }
    for s in &mut scenarios {
        s.solved = s.completed == s.goals;
    }

    let categories = Category::ALL
        .iter()
        .map(|&category| {
            let cat_rows: Vec<&SubtaskRow> =
                rows.iter().filter(|r| r.category == category).collect();
            let cat_scen: Vec<&ScenarioSummary> = scenarios
                .iter()
                .filter(|s| s.category == category)
                .collect();
            let count = |o: Option<Outcome>| cat_rows.iter().filter(|r| r.outcome == o).count();
            let shape = CategoryShape {
                category,
                scenarios: cat_scen.len(),
                subtasks: cat_rows.len(),
            };
            CategorySummary {
                category,
                scenarios: shape.scenarios,
                subtasks: shape.subtasks,
                subtasks_per_scenario: shape.subtasks_per_scenario(),
                attempted: cat_rows.iter().filter(|r| r.outcome.is_some()).count(),
                completed: count(Some(Outcome::Completed)),
                failed: count(Some(Outcome::Failed)),
                timed_out: count(Some(Outcome::TimedOut)),
                not_attempted: count(None),
                solved_scenarios: cat_scen.iter().filter(|s| s.solved).count(),
                time_per_scenario: Mean {
                    completed: mean(cat_scen.iter().filter(|s| s.solved).map(|s| s.total_secs)),
                    all_attempts: mean(
                        cat_scen
                            .iter()
                            .filter(|s| s.not_attempted < s.goals)
                            .map(|s| s.total_secs),
                    ),
                },
                time_per_subtask: Mean {
                    completed: mean(
                        cat_rows
                            .iter()
                            .filter(|r| r.outcome == Some(Outcome::Completed))
                            .map(|r| r.elapsed_secs),
                    ),
                    all_attempts: mean(
                        cat_rows
                            .iter()
                            .filter(|r| r.outcome.is_some())
                            .map(|r| r.elapsed_secs),
                    ),
                },
            }
        })
        .collect();

    Ok(BenchReport {
        judge: result.judge,
        averaging: AVERAGING_NOTE.to_string(),
        total_subtasks: rows.len(),
        total_completed: rows
            .iter()
            .filter(|r| r.outcome == Some(Outcome::Completed))
            .count(),
        categories,
        scenarios,
        subtasks: rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    TextTable,
    StructuredData,
}

/// Seconds with one decimal, dropping a trailing ".0".
pub fn format_secs(secs: f64) -> String {
    let s = format!("{secs:.1}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

fn format_mean(m: Option<f64>) -> String {
    m.map_or_else(|| "-".to_string(), format_secs)
}

const LABEL_WIDTH: usize = 26;

fn row(out: &mut String, label: &str, values: impl IntoIterator<Item = String>) {
    let values: Vec<String> = values.into_iter().collect();
    let _ = writeln!(out, "  {label:<LABEL_WIDTH$}{}", values.join(" "));
}

fn column_header() -> String {
    let names: Vec<&str> = Category::ALL.iter().map(|c| c.label()).collect();
    names.join(" | ")
}

/// The suite statistics table: scenarios, subtasks and subtasks per
/// scenario for each category.
pub fn suite_table(shape: &[CategoryShape]) -> String {
    let mut out = format!("Benchmark suite statistics ({})\n", column_header());
    row(
        &mut out,
        "Number of Scenarios",
        shape.iter().map(|s| s.scenarios.to_string()),
    );
    row(
        &mut out,
        "Number of Subtasks",
        shape.iter().map(|s| s.subtasks.to_string()),
    );
    row(
        &mut out,
        "Subtasks per Scenario",
        shape
            .iter()
            .map(|s| format!("{:.2}", s.subtasks_per_scenario())),
    );
    out
}

/// Renders `report`. Output depends only on the report.
pub fn emit_report(report: &BenchReport, format: ReportFormat) -> Result<String, BenchError> {
    match format {
        ReportFormat::StructuredData => {
            let mut s =
                serde_json::to_string_pretty(report).map_err(|e| BenchError::Io(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::TextTable => Ok(text_table(report)),
    }
}

fn text_table(report: &BenchReport) -> String {
    let cats = &report.categories;
    let shape: Vec<CategoryShape> = cats
        .iter()
        .map(|c| CategoryShape {
            category: c.category,
            scenarios: c.scenarios,
            subtasks: c.subtasks,
        })
        .collect();
    let mut out = suite_table(&shape);

    let _ = writeln!(out, "\nCompletion (judge: {})", report.judge.label());
    row(
        &mut out,
        "Completed",
        cats.iter()
            .map(|c| format!("{}/{}", c.completed, c.subtasks)),
    );
    row(
        &mut out,
        "Failed",
        cats.iter().map(|c| c.failed.to_string()),
    );
    row(
        &mut out,
        "Timed out",
        cats.iter().map(|c| c.timed_out.to_string()),
    );
    row(
        &mut out,
        "Not attempted",
        cats.iter().map(|c| c.not_attempted.to_string()),
    );
    row(
        &mut out,
        "Solved scenarios",
        cats.iter()
            .map(|c| format!("{}/{}", c.solved_scenarios, c.scenarios)),
    );
    row(
        &mut out,
        "Total",
        [format!(
            "{}/{} subtasks completed",
            report.total_completed, report.total_subtasks
        )],
    );

    let _ = writeln!(
        out,
        "\nTiming in seconds, mean over completed items (all attempts in parentheses)"
    );
    let timing = |m: &Mean| {
        format!(
            "{} ({})",
            format_mean(m.completed),
            format_mean(m.all_attempts)
        )
    };
    row(
        &mut out,
        "Time per Scenario",
        cats.iter().map(|c| timing(&c.time_per_scenario)),
    );
    row(
        &mut out,
        "Time per Subtask",
        cats.iter().map(|c| timing(&c.time_per_subtask)),
    );

    let aborted: Vec<&ScenarioSummary> = report
        .scenarios
        .iter()
        .filter(|s| s.aborted.is_some())
        .collect();
    if !aborted.is_empty() {
        let _ = writeln!(out, "\nAborted scenarios");
        for s in aborted {
            let _ = writeln!(
                out,
                "  {}: {}",
                s.id,
                s.aborted.as_deref().unwrap_or_default()
            );
        }
    }
    out
}

/// Writes a rendered report to `path`.
pub fn write_report(path: &Path, document: &str) -> Result<(), BenchError> {
    std::fs::write(path, document).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seconds_drop_a_trailing_zero() {
        assert_eq!(format_secs(377.0), "377");
        assert_eq!(format_secs(97.3), "97.3");
        assert_eq!(format_secs(83.44), "83.4");
        assert_eq!(format_secs(0.04), "0");
    }

    #[test]
    fn empty_result_is_an_error() {
        let r = BenchResult {
            judge: JudgeKind::AutoAcceptOnPass,
            per_subtask: Vec::new(),
            aborted: Vec::new(),
        };
        assert!(matches!(aggregate(&r), Err(BenchError::EmptyResult)));
    }
}

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Algorithm,
    MachineLearning,
    RealWorld,
}

impl Category {
    pub const ALL: [Category; 3] = [
        Category::Algorithm,
        Category::MachineLearning,
        Category::RealWorld,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Category::Algorithm => "Algorithm",
            Category::MachineLearning => "Machine Learning",
            Category::RealWorld => "Real World",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One benchmark scenario: a narrative and the goals a learner works
/// through in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub id: String,
    pub title: String,
    pub category: Category,
    pub detail: String,
    pub goals: Vec<String>,
}

impl ScenarioSpec {
    pub fn parse(source: &str, origin: &str) -> Result<Self, BenchError> {
        let spec: ScenarioSpec = toml::from_str(source).map_err(|e| BenchError::Parse {
            file: origin.to_string(),
            reason: e.to_string(),
        })?;
        spec.check(origin)?;
        Ok(spec)
    }

    fn check(&self, origin: &str) -> Result<(), BenchError> {
        let fail = |reason: &str| {
            Err(BenchError::Parse {
                file: origin.to_string(),
                reason: reason.to_string(),
            })
        };
        if self.id.trim().is_empty() {
            return fail("id is empty");
        }
        if self.goals.is_empty() {
            return fail("goals list is empty");
        }
        if self.goals.iter().any(|g| g.trim().is_empty()) {
            return fail("a goal is empty");
        }
        Ok(())
    }
}

fn sort_and_check(mut suite: Vec<ScenarioSpec>) -> Result<Vec<ScenarioSpec>, BenchError> {
    suite.sort_by(|a, b| (a.category, &a.id).cmp(&(b.category, &b.id)));
    let mut seen = BTreeSet::new();
    for s in &suite {
        if !seen.insert(s.id.as_str()) {
            return Err(BenchError::DuplicateId(s.id.clone()));
        }
    }
    Ok(suite)
}

/// Reads every `*.toml` file in `dir`, ordered by (category, id).
pub fn load_suite(dir: &Path) -> Result<Vec<ScenarioSpec>, BenchError> {
    let io = |e: std::io::Error| BenchError::Io(format!("{}: {e}", dir.display()));
    let mut suite = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.extension().is_some_and(|e| e == "toml") {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))?;
            suite.push(ScenarioSpec::parse(&text, &path.display().to_string())?);
        }
    }
    sort_and_check(suite)
}

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        [$(($name, include_str!(concat!("../../suite/", $name, ".toml")))),*]
    };
}

const BUNDLED: [(&str, &str); 20] = bundled![
    "adaboost",
    "bank-account-lfu",
    "binary-search-tree",
    "csv-neural-network",
    "dijkstra",
    "dynamic-programming",
    "heap",
    "huffman-encoding",
    "linked-list",
    "lstm",
    "regression",
    "regular-expression",
    "scientific-calculator",
    "sorting",
    "stack",
    "sudoku-solver",
    "support-vector-machine",
    "trie-tree",
    "unsupervised-learning",
    "web-scraping",
];

/// The 20-scenario suite shipped with the crate.
pub fn bundled_suite() -> Vec<ScenarioSpec> {
    let suite = BUNDLED
        .iter()
        .map(|(name, src)| ScenarioSpec::parse(src, name).expect("bundled scenario is valid"))
        .collect();
    sort_and_check(suite).expect("bundled ids are unique")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryShape {
    pub category: Category,
    pub scenarios: usize,
    pub subtasks: usize,
}

impl CategoryShape {
    pub fn subtasks_per_scenario(&self) -> f64 {
        if self.scenarios == 0 {
            0.0
        } else {
            self.subtasks as f64 / self.scenarios as f64
        }
    }
}

/// Scenario and goal counts per category, in [`Category::ALL`] order.
pub fn validate_suite(suite: &[ScenarioSpec]) -> Vec<CategoryShape> {
    Category::ALL
        .iter()
        .map(|&category| {
            let members = suite.iter().filter(|s| s.category == category);
            CategoryShape {
                category,
                scenarios: members.clone().count(),
                subtasks: members.map(|s| s.goals.len()).sum(),
            }
        })
        .collect()
}

/// Expected (scenarios, subtasks) per category for the bundled suite.
pub const REFERENCE_SHAPE: [(Category, usize, usize); 3] = [
    (Category::Algorithm, 8, 31),
    (Category::MachineLearning, 6, 26),
    (Category::RealWorld, 6, 22),
];

/// Compares `shape` with [`REFERENCE_SHAPE`] and lists every mismatch.
pub fn check_against_reference(shape: &[CategoryShape]) -> Result<(), BenchError> {
    let mut problems = Vec::new();
    for (category, scenarios, subtasks) in REFERENCE_SHAPE {
        match shape.iter().find(|s| s.category == category) {
            None => problems.push(format!("{category}: missing")),
            Some(s) => {
                if s.scenarios != scenarios {
                    problems.push(format!(
                        "{category}: {} scenarios, expected {scenarios}",
                        s.scenarios
                    ));
                }
                if s.subtasks != subtasks {
                    problems.push(format!(
                        "{category}: {} subtasks, expected {subtasks}",
                        s.subtasks
                    ));
                }
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(BenchError::SuiteMismatch(problems))
    }
}

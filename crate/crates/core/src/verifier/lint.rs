use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LintMessage {
    pub file: String,
    pub line: u32,
    pub column: u32,
    pub rule: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedLint {
    pub messages: Vec<LintMessage>,
    /// Non-empty lines that did not match the grammar.
    pub unmatched: usize,
}

static LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?P<file>[^:\n]+?):(?P<line>\d+):(?:(?P<col>\d+):)?\s+(?P<rest>\S.*?)\s*$")
        .expect("valid regex")
});
static RULE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?P<rule>[A-Z]+[0-9]+)(?:\s+(?P<text>\S.*))?$").expect("valid regex")
});

/// Checker codes for pyflakes messages, which carry no code of their own.
/// The codes follow the ones flake8 assigns to the same messages. Anything
/// unrecognized is a syntax error report.
const PYFLAKES_CODES: &[(&str, &str)] = &[
    ("imported but unused", "F401"),
    ("shadowed by loop variable", "F402"),
    ("used; unable to detect undefined names", "F403"),
    ("may be undefined, or defined from star imports", "F405"),
    ("is assigned to but never used", "F841"),
    ("redefinition of unused", "F811"),
    ("in __all__", "F822"),
    ("referenced before assignment", "F823"),
    ("undefined name", "F821"),
    ("duplicate argument", "F831"),
    ("dictionary key", "F601"),
    ("'return' outside function", "F706"),
    ("'yield' outside function", "F704"),
    ("'break' outside loop", "F701"),
    ("'continue' not properly in loop", "F702"),
    ("f-string is missing placeholders", "F541"),
    ("use ==/!= to compare constant literals", "F632"),
    ("unused annotation", "F842"),
    ("'...' % ... has", "F501"),
    ("'...'.format(...) has", "F521"),
];

pub fn infer_rule(text: &str) -> &'static str {
    PYFLAKES_CODES
        .iter()
        .find(|(needle, _)| text.contains(needle))
        .map_or("E999", |(_, code)| code)
}

/// Parses `FILE:LINE:COL: RULE TEXT` lines. The column may be absent (it is
/// then 1) and so may the rule code, in which case it is inferred from the
/// message text. Never fails; lines that do not fit are counted.
pub fn parse_lint_output(raw: &str) -> ParsedLint {
    let mut parsed = ParsedLint::default();
    for line in raw.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let Some(cap) = LINE.captures(line) else {
            parsed.unmatched += 1;
            continue;
        };
        let (Ok(line_no), column) = (
            cap["line"].parse::<u32>(),
            cap.name("col").map_or(Ok(1), |c| c.as_str().parse::<u32>()),
        ) else {
            parsed.unmatched += 1;
            continue;
        };
        let Ok(column) = column else {
            parsed.unmatched += 1;
            continue;
        };
        let rest = &cap["rest"];
        let (rule, text) = match RULE.captures(rest) {
            Some(r) => {
                let text = r
                    .name("text")
                    .map_or_else(|| r["rule"].to_string(), |t| t.as_str().to_string());
                (r["rule"].to_string(), text)
            }
            None => (infer_rule(rest).to_string(), rest.to_string()),
        };
        parsed.messages.push(LintMessage {
            file: cap["file"].to_string(),
            line: line_no.max(1),
            column: column.max(1),
            rule,
            text,
        });
    }
    parsed
}

//! Reply grammar: section headers on their own line (`EXPLANATION:`,
//! `KEYWORDS:`, `RELATED:`, `DEFINITION:`), dash-prefixed keyword items,
//! `Q:`/`A:` alternation for related questions, and code between the
//! template's delimiter pair or in a markdown fence.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::escape::{escape, unescape, DelimiterStyle};
use crate::session::RelatedQa;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplyKind {
    ConceptSections,
    CodeSections,
    CodeOnly,
    DefinitionOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplyError {
    #[error("reply is empty")]
    Empty,
    #[error("missing or malformed {section} section: {detail}")]
    ParseFailure { section: String, detail: String },
    #[error("code block is empty")]
    EmptyCodeBlock,
}

impl ReplyError {
    fn missing(section: &str, detail: impl Into<String>) -> Self {
        ReplyError::ParseFailure {
            section: section.to_string(),
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredReply {
    pub raw: String,
    /// Section name to normalized text. Keywords are stored one per line and
    /// related pairs as `Q: ..`/`A: ..` lines.
    pub sections: BTreeMap<String, String>,
    pub keywords: Vec<String>,
    pub related: Vec<RelatedQa>,
    pub code: Option<String>,
    pub warnings: Vec<String>,
}

impl StructuredReply {
    pub fn explanation(&self) -> Option<&str> {
        self.sections.get("explanation").map(String::as_str)
    }

    pub fn definition(&self) -> Option<&str> {
        self.sections.get("definition").map(String::as_str)
    }
}

static HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)^\s*(?:#{1,6}\s*)?(?:\*\*)?(explanation|keywords|related|definition)(?:\*\*)?\s*:\s*(?:\*\*)?\s*(.*?)\s*$",
    )
    .expect("valid regex")
});
static ITEM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:[-*•+]|\d+[.)])\s+(.+?)\s*$").expect("valid regex"));
static QA: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)^\s*(?:[-*]\s*|\d+[.)]\s*)?(?:\*\*)?(q|question|a|answer)\s*\d*\s*(?:\*\*)?\s*:\s*(?:\*\*)?\s*(.*?)\s*$",
    )
    .expect("valid regex")
});

struct Block {
    start: usize,
    end: usize,
    content: String,
}

fn strip_one_newline_each_side(s: &str) -> &str {
    let s = s
        .strip_prefix("\r\n")
        .or_else(|| s.strip_prefix('\n'))
        .unwrap_or(s);
    s.strip_suffix("\r\n")
        .or_else(|| s.strip_suffix('\n'))
        .unwrap_or(s)
}

/// Byte offset of the next line that starts with a markdown fence.
fn next_fence(raw: &str, from: usize) -> Option<usize> {
    let mut offset = from;
    if offset > 0 && raw.as_bytes()[offset - 1] != b'\n' {
        offset += raw[offset..].find('\n')? + 1;
    }
    while offset < raw.len() {
        let line_end = raw[offset..].find('\n').map_or(raw.len(), |i| offset + i);
        if raw[offset..line_end].trim_start().starts_with("```") {
            return Some(offset);
        }
        offset = line_end + 1;
    }
    None
}

fn find_blocks(raw: &str, style: DelimiterStyle) -> Result<Vec<Block>, ReplyError> {
    let mut blocks = Vec::new();
    let mut pos = 0;
    loop {
        let tagged = raw[pos..].find(style.open()).map(|i| pos + i);
        let fenced = next_fence(raw, pos);
        let block = match (tagged, fenced) {
            (None, None) => break,
            (Some(t), f) if f.is_none_or(|f| t < f) => {
                let body_start = t + style.open().len();
                let Some(rel) = raw[body_start..].find(style.close()) else {
                    if blocks.is_empty() {
                        return Err(ReplyError::missing("code", "unterminated code block"));
                    }
                    break;
                };
                let body_end = body_start + rel;
                Block {
                    start: t,
                    end: body_end + style.close().len(),
                    content: strip_one_newline_each_side(&raw[body_start..body_end]).to_string(),
                }
            }
            (_, f) => {
                let f = f.expect("a missing fence takes the tagged arm");
                let Some(nl) = raw[f..].find('\n') else {
                    break;
                };
                let body_start = f + nl + 1;
                let mut cursor = body_start;
                let mut closing = None;
                while cursor < raw.len() {
                    let line_end = raw[cursor..].find('\n').map_or(raw.len(), |i| cursor + i);
                    if raw[cursor..line_end].trim() == "```" {
                        closing = Some((cursor, line_end));
                        break;
                    }
                    cursor = line_end + 1;
                }
                let Some((close_start, close_end)) = closing else {
                    if blocks.is_empty() {
                        return Err(ReplyError::missing("code", "unterminated code fence"));
                    }
                    break;
                };
                let body = if close_start > body_start {
                    &raw[body_start..close_start - 1]
                } else {
                    ""
                };
                Block {
                    start: f,
                    end: close_end,
                    content: body.to_string(),
                }
            }
        };
        pos = block.end;
        blocks.push(block);
        if pos >= raw.len() {
            break;
        }
    }
    Ok(blocks)
}

fn clean_keyword(item: &str) -> String {
    let mut k = item.trim();
    for sep in [": ", " - ", " \u{2013} ", " \u{2014} "] {
        if let Some((head, _)) = k.split_once(sep) {
            k = head;
        }
    }
    k.trim_matches(|c: char| c == '*' || c == '`' || c == '"' || c == '\'' || c.is_whitespace())
        .to_string()
}

fn parse_keywords(body: &[&str]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut plain = Vec::new();
    for line in body {
        if let Some(cap) = ITEM.captures(line) {
            out.push(clean_keyword(&cap[1]));
        } else if !line.trim().is_empty() {
            plain.push(*line);
        }
    }
    if out.is_empty() {
        out = plain
            .iter()
            .flat_map(|l| l.split(','))
            .map(clean_keyword)
            .collect();
    }
    let mut unique = Vec::new();
    for k in out {
        if !k.is_empty() && !unique.iter().any(|u: &String| u.eq_ignore_ascii_case(&k)) {
            unique.push(k);
        }
    }
    unique
}

fn parse_related(body: &[&str], warnings: &mut Vec<String>) -> Vec<RelatedQa> {
    let mut pairs = Vec::new();
    let mut question: Option<String> = None;
    let mut answer: Option<String> = None;
    let flush = |q: &mut Option<String>,
                 a: &mut Option<String>,
                 pairs: &mut Vec<RelatedQa>,
                 w: &mut Vec<String>| {
        match (q.take(), a.take()) {
            (Some(q), Some(a)) if !q.is_empty() && !a.is_empty() => pairs.push(RelatedQa {
                question: q,
                answer: a,
            }),
            (Some(q), _) => w.push(format!("related question without answer dropped: {q:?}")),
            _ => {}
        }
    };
    for line in body {
        if let Some(cap) = QA.captures(line) {
            let text = cap[2].to_string();
            if cap[1].to_ascii_lowercase().starts_with('q') {
                flush(&mut question, &mut answer, &mut pairs, warnings);
                question = Some(text);
            } else if question.is_none() {
                warnings.push(format!("related answer without question dropped: {text:?}"));
            } else if answer.is_some() {
                flush(&mut question, &mut answer, &mut pairs, warnings);
                warnings.push(format!("related answer without question dropped: {text:?}"));
            } else {
                answer = Some(text);
            }
        } else if !line.trim().is_empty() {
            let slot = if answer.is_some() {
                &mut answer
            } else {
                &mut question
            };
            if let Some(s) = slot {
                if !s.is_empty() {
                    s.push('\n');
                }
                s.push_str(line.trim_end());
            }
        }
    }
    flush(&mut question, &mut answer, &mut pairs, warnings);
    pairs
}

fn join_trimmed(lines: &[&str]) -> String {
    unescape(lines.join("\n").trim())
}

/// Splits `raw` into sections and validates the ones `expected` requires.
pub fn parse_reply(
    raw: &str,
    expected: ReplyKind,
    style: DelimiterStyle,
) -> Result<StructuredReply, ReplyError> {
    if raw.trim().is_empty() {
        return Err(ReplyError::Empty);
    }
    let mut warnings = Vec::new();
    let wants_code = matches!(expected, ReplyKind::CodeSections | ReplyKind::CodeOnly);

    let mut text = raw.to_string();
    let mut code = None;
    if wants_code {
        let blocks = find_blocks(raw, style)?;
        let Some(first) = blocks.first() else {
            return Err(ReplyError::missing("code", "no delimited code block"));
        };
        if blocks.len() > 1 {
            warnings.push(format!(
                "reply contained {} code blocks; using the first",
                blocks.len()
            ));
        }
        if first.content.trim().is_empty() {
            return Err(ReplyError::EmptyCodeBlock);
        }
        code = Some(unescape(&first.content));
        let mut stripped = String::with_capacity(raw.len());
        let mut last = 0;
        for b in &blocks {
            stripped.push_str(&raw[last..b.start]);
            stripped.push('\n');
            last = b.end;
        }
        stripped.push_str(&raw[last..]);
        text = stripped;
    }

    let mut preamble: Vec<&str> = Vec::new();
    let mut named: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for line in text.lines() {
        if let Some(cap) = HEADER.captures(line) {
            let name = cap[1].to_ascii_lowercase();
            if named.contains_key(&name) {
                warnings.push(format!("repeated {name} header; sections merged"));
            }
            let entry = named.entry(name.clone()).or_default();
            let inline = cap.get(2).map_or("", |m| m.as_str());
            if !inline.is_empty() {
                entry.push(inline);
            }
            current = Some(name);
        } else {
            match &current {
                Some(name) => named.get_mut(name).expect("section exists").push(line),
                None => preamble.push(line),
            }
        }
    }

    let mut sections = BTreeMap::new();
    let mut keywords = Vec::new();
    let mut related = Vec::new();

    let explanation_lines = named.get("explanation").unwrap_or(&preamble);
    let explanation = join_trimmed(explanation_lines);
    if !explanation.is_empty() {
        sections.insert("explanation".to_string(), explanation);
    }
    if let Some(body) = named.get("keywords") {
        keywords = parse_keywords(body)
            .into_iter()
            .map(|k| unescape(&k))
            .collect();
        sections.insert("keywords".to_string(), keywords.join("\n"));
    }
    if let Some(body) = named.get("related") {
        related = parse_related(body, &mut warnings)
            .into_iter()
            .map(|p| RelatedQa {
                question: unescape(&p.question),
                answer: unescape(&p.answer),
            })
            .collect();
        let rendered: Vec<String> = related
            .iter()
            .map(|p| format!("Q: {}\nA: {}", p.question, p.answer))
            .collect();
        sections.insert("related".to_string(), rendered.join("\n"));
    }
    if let Some(body) = named.get("definition") {
        let d = join_trimmed(body);
        if !d.is_empty() {
            sections.insert("definition".to_string(), d);
        }
    }
    if let Some(c) = &code {
        sections.insert("code".to_string(), c.clone());
    }

    match expected {
        ReplyKind::ConceptSections => {
            if !sections.contains_key("explanation") {
                return Err(ReplyError::missing("explanation", "no explanation text"));
            }
            if keywords.is_empty() {
                return Err(ReplyError::missing("keywords", "no keyword items"));
            }
            if related.is_empty() {
                return Err(ReplyError::missing("related", "no complete Q:/A: pair"));
            }
        }
        ReplyKind::CodeSections => {
            if !named.contains_key("related") {
                warnings.push("reply has no related questions".to_string());
            }
        }
        ReplyKind::CodeOnly => {}
        ReplyKind::DefinitionOnly => {
            if !sections.contains_key("definition") {
                let fallback = join_trimmed(&preamble);
                if fallback.is_empty() {
                    return Err(ReplyError::missing("definition", "no definition text"));
                }
                warnings.push("definition given without a DEFINITION header".to_string());
                sections.insert("definition".to_string(), fallback);
            }
        }
    }

    Ok(StructuredReply {
        raw: raw.to_string(),
        sections,
        keywords,
        related,
        code,
        warnings,
    })
}

/// Writers for replies that follow the contract the templates ask for.
/// Scripted backends and tests use them to build conforming fixtures.
pub mod contract {
    use super::*;

    fn related_block(related: &[RelatedQa]) -> String {
        let mut out = String::from("RELATED:\n");
        for p in related {
            out.push_str(&format!("Q: {}\nA: {}\n", p.question, p.answer));
        }
        out
    }

    pub fn concept_reply(explanation: &str, keywords: &[&str], related: &[RelatedQa]) -> String {
        let mut out = format!("EXPLANATION:\n{explanation}\n\nKEYWORDS:\n");
        for k in keywords {
            out.push_str(&format!("- {k}\n"));
        }
        out.push('\n');
        out.push_str(&related_block(related));
        out
    }

    pub fn code_reply(code: &str, related: &[RelatedQa], style: DelimiterStyle) -> String {
        let mut out = format!(
            "{}\n{}\n{}\n",
            style.open(),
            escape(code, style),
            style.close()
        );
        if !related.is_empty() {
            out.push('\n');
            out.push_str(&related_block(related));
        }
        out
    }

    pub fn definition_reply(definition: &str) -> String {
        format!("DEFINITION:\n{definition}\n")
    }
}

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{ClassifierError, Result};

/// Route label: 0 for conceptual questions, 1 for coding questions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    Concept,
    Code,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Concept => 0,
            Label::Code => 1,
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Label::Concept),
            1 => Ok(Label::Code),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l.index() as u8
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Concept => "concept",
            Label::Code => "code",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabeledQuestion {
    pub text: String,
    pub label: Label,
}

impl LabeledQuestion {
    pub fn new(text: impl Into<String>, label: Label) -> Self {
        LabeledQuestion {
            text: text.into(),
            label,
        }
    }
}

/// Parses a corpus with one `{"text": ..., "label": 0|1}` record per line.
/// Blank lines are skipped.
pub fn parse_corpus(src: &str) -> Result<Vec<LabeledQuestion>> {
    let mut out = Vec::new();
    for (idx, line) in src.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let q: LabeledQuestion =
            serde_json::from_str(line).map_err(|e| ClassifierError::Corpus {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        if q.text.trim().is_empty() {
            return Err(ClassifierError::Corpus {
                line: idx + 1,
                reason: "empty text".into(),
            });
        }
        out.push(q);
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<LabeledQuestion>> {
    parse_corpus(&std::fs::read_to_string(path)?)
}

pub fn write_corpus<W: Write>(mut w: W, corpus: &[LabeledQuestion]) -> Result<()> {
    for q in corpus {
        serde_json::to_writer(&mut w, q).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_records_and_skips_blank_lines() {
        let src = "{\"text\":\"What is a heap?\",\"label\":0}\n\n{\"text\":\"Implement a heap\",\"label\":1}\n";
        let corpus = parse_corpus(src).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus[1].label, Label::Code);
        let mut buf = Vec::new();
        write_corpus(&mut buf, &corpus).unwrap();
        assert_eq!(
            parse_corpus(std::str::from_utf8(&buf).unwrap()).unwrap(),
            corpus
        );
    }

    #[test]
    fn rejects_bad_labels_with_line_numbers() {
        let err =
            parse_corpus("{\"text\":\"a\",\"label\":0}\n{\"text\":\"b\",\"label\":2}").unwrap_err();
        assert!(matches!(err, ClassifierError::Corpus { line: 2, .. }));
        assert!(parse_corpus("{\"text\":\" \",\"label\":0}").is_err());
    }
}

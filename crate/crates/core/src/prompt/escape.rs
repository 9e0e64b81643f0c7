//! Reversible escaping of delimiter tokens inside prompt payloads.
//!
//! `␛` (U+241B) is the escape character. It is doubled when it occurs in a
//! payload, and each delimiter token of the active style is replaced by `␛`
//! plus a one-letter code. Restoration understands every code, so replies can
//! be unescaped without knowing which style produced the prompt.

use serde::{Deserialize, Serialize};

pub const ESCAPE: char = '\u{241B}';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelimiterStyle {
    TripleQuote,
    AngleTag,
}

impl DelimiterStyle {
    pub fn open(self) -> &'static str {
        match self {
            DelimiterStyle::TripleQuote => "\"\"\"",
            DelimiterStyle::AngleTag => "<code>",
        }
    }

    pub fn close(self) -> &'static str {
        match self {
            DelimiterStyle::TripleQuote => "\"\"\"",
            DelimiterStyle::AngleTag => "</code>",
        }
    }

    fn tokens(self) -> &'static [(&'static str, char)] {
        match self {
            DelimiterStyle::TripleQuote => &[("\"\"\"", 'q')],
            DelimiterStyle::AngleTag => &[("<code>", 'o'), ("</code>", 'c')],
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "triple_quote" => Some(DelimiterStyle::TripleQuote),
            "angle_tag" => Some(DelimiterStyle::AngleTag),
            _ => None,
        }
    }
}

pub fn escape(text: &str, style: DelimiterStyle) -> String {
    let tokens = style.tokens();
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    'outer: while let Some(c) = rest.chars().next() {
        if c == ESCAPE {
            out.push(ESCAPE);
            out.push(ESCAPE);
            rest = &rest[c.len_utf8()..];
            continue;
        }
        for (token, code) in tokens {
            if rest.starts_with(token) {
                out.push(ESCAPE);
                out.push(*code);
                rest = &rest[token.len()..];
                continue 'outer;
            }
        }
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    out
}

pub fn unescape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c != ESCAPE {
            out.push(c);
            continue;
        }
        let replacement = match chars.peek() {
            Some(&ESCAPE) => Some("\u{241B}"),
            Some('q') => Some("\"\"\""),
            Some('o') => Some("<code>"),
            Some('c') => Some("</code>"),
            _ => None,
        };
        match replacement {
            Some(r) => {
                out.push_str(r);
                chars.next();
            }
            // A lone escape character is kept as is.
            None => out.push(c),
        }
    }
    out
}

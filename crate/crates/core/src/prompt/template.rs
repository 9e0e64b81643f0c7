use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::LazyLock;

use super::escape::{escape, DelimiterStyle};
use super::PromptError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    ConceptMain,
    ConceptKeywords,
    ConceptRelated,
    KeywordDefine,
    CodeMain,
    CodeRelated,
    BuildupLint,
    BuildupRuntime,
    BuildupRequest,
    BuildupChain,
}

impl TemplateId {
    pub const ALL: [TemplateId; 10] = [
        TemplateId::ConceptMain,
        TemplateId::ConceptKeywords,
        TemplateId::ConceptRelated,
        TemplateId::KeywordDefine,
        TemplateId::CodeMain,
        TemplateId::CodeRelated,
        TemplateId::BuildupLint,
        TemplateId::BuildupRuntime,
        TemplateId::BuildupRequest,
        TemplateId::BuildupChain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::ConceptMain => "concept_main",
            TemplateId::ConceptKeywords => "concept_keywords",
            TemplateId::ConceptRelated => "concept_related",
            TemplateId::KeywordDefine => "keyword_define",
            TemplateId::CodeMain => "code_main",
            TemplateId::CodeRelated => "code_related",
            TemplateId::BuildupLint => "buildup_lint",
            TemplateId::BuildupRuntime => "buildup_runtime",
            TemplateId::BuildupRequest => "buildup_request",
            TemplateId::BuildupChain => "buildup_chain",
        }
    }

    /// Templates whose reply replaces the current code of a subtask in place.
    pub fn is_repair(self) -> bool {
        matches!(
            self,
            TemplateId::BuildupLint | TemplateId::BuildupRuntime | TemplateId::BuildupRequest
        )
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| format!("unknown template id {s:?}"))
    }
}

/// Placeholders every template may use without declaring them.
pub const BUILTIN_PLACEHOLDERS: [&str; 4] = ["open", "close", "language", "max_related"];

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{([a-z][a-z0-9_]*)\}").expect("valid regex"));

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub role_preamble: String,
    pub delimiter_style: DelimiterStyle,
    /// Values substituted inline after escaping.
    pub placeholders: BTreeSet<String>,
    /// Values escaped and wrapped in the delimiter pair on their own lines.
    pub blocks: BTreeSet<String>,
    pub body: String,
}

fn parse_list(value: &str) -> BTreeSet<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

impl PromptTemplate {
    /// Parses a template file: a `---` delimited header of `key: value` lines
    /// followed by the body.
    pub fn parse(source: &str, origin: &str) -> Result<Self, PromptError> {
        let err = |reason: String| PromptError::Template {
            origin: origin.to_string(),
            reason,
        };
        let source = source.replace("\r\n", "\n");
        let rest = source
            .strip_prefix("---\n")
            .ok_or_else(|| err("missing front matter".into()))?;
        let end = rest
            .find("\n---\n")
            .ok_or_else(|| err("unterminated front matter".into()))?;
        let (header, body) = (&rest[..end], &rest[end + 5..]);

        let mut fields = BTreeMap::new();
        for line in header.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once(':')
                .ok_or_else(|| err(format!("bad header line {line:?}")))?;
            if fields
                .insert(k.trim().to_string(), v.trim().to_string())
                .is_some()
            {
                return Err(err(format!("duplicate header key {:?}", k.trim())));
            }
        }
        let mut take = |key: &str| {
            fields
                .remove(key)
                .ok_or_else(|| err(format!("missing header key {key:?}")))
        };
        let id: TemplateId = take("id")?.parse().map_err(err)?;
        let style_name = take("delimiter_style")?;
        let delimiter_style = DelimiterStyle::parse(&style_name)
            .ok_or_else(|| err(format!("unknown delimiter_style {style_name:?}")))?;
        let placeholders = parse_list(&take("placeholders")?);
        let blocks = take("blocks").map(|v| parse_list(&v)).unwrap_or_default();
        let role_preamble = take("role")?;
        if let Some(extra) = fields.keys().next() {
            return Err(err(format!("unknown header key {extra:?}")));
        }
        if role_preamble.is_empty() {
            return Err(err("empty role".into()));
        }
        let body = body.trim_end().to_string();
        if body.trim().is_empty() {
            return Err(err("empty body".into()));
        }

        let template = PromptTemplate {
            id,
            role_preamble,
            delimiter_style,
            placeholders,
            blocks,
            body,
        };
        template.validate()?;
        Ok(template)
    }

    /// Placeholder names referenced in the body, in order of first use.
    pub fn referenced(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for cap in PLACEHOLDER.captures_iter(&self.body) {
            let name = cap[1].to_string();
            if !seen.contains(&name) {
                seen.push(name);
            }
        }
        seen
    }

    fn validate(&self) -> Result<(), PromptError> {
        if let Some(name) = self.placeholders.intersection(&self.blocks).next() {
            return Err(PromptError::Template {
                origin: self.id.to_string(),
                reason: format!("{name:?} declared both inline and as a block"),
            });
        }
        for name in self.referenced() {
            let declared = self.placeholders.contains(&name)
                || self.blocks.contains(&name)
                || BUILTIN_PLACEHOLDERS.contains(&name.as_str());
            if !declared {
                return Err(PromptError::UndeclaredPlaceholder {
                    template: self.id,
                    name,
                });
            }
        }
        Ok(())
    }

    /// Substitutes every placeholder. `style` decides the delimiter pair; it
    /// is passed in so fragments appended to another template share its style.
    pub fn render(
        &self,
        bindings: &BTreeMap<&str, String>,
        builtins: &BTreeMap<&str, String>,
        style: DelimiterStyle,
    ) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.body.len() * 2);
        let mut last = 0;
        for cap in PLACEHOLDER.captures_iter(&self.body) {
            let whole = cap.get(0).expect("match");
            out.push_str(&self.body[last..whole.start()]);
            last = whole.end();
            let name = &cap[1];
            let unbound = || PromptError::Unbound {
                template: self.id,
                name: name.to_string(),
            };
            match name {
                "open" => out.push_str(style.open()),
                "close" => out.push_str(style.close()),
                _ if self.blocks.contains(name) => {
                    let value = bindings.get(name).ok_or_else(unbound)?;
                    out.push_str(style.open());
                    out.push('\n');
                    out.push_str(&escape(value, style));
                    out.push('\n');
                    out.push_str(style.close());
                }
                _ if self.placeholders.contains(name) => {
                    let value = bindings.get(name).ok_or_else(unbound)?;
                    out.push_str(&escape(value, style));
                }
                _ => out.push_str(builtins.get(name).ok_or_else(unbound)?),
            }
        }
        out.push_str(&self.body[last..]);
        Ok(out)
    }
}

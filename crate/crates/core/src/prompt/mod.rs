//! Prompt chains: a catalog of text templates, rendering with delimiter
//! escaping and a size budget, and parsing of the sectioned replies.

mod escape;
mod reply;
mod template;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::{ConceptAnswer, Keyword};
use crate::verifier::LintMessage;

pub use escape::{escape, unescape, DelimiterStyle, ESCAPE};
pub use reply::{contract, parse_reply, ReplyError, ReplyKind, StructuredReply};
pub use template::{PromptTemplate, TemplateId, BUILTIN_PLACEHOLDERS};

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("template {origin}: {reason}")]
    Template { origin: String, reason: String },
    #[error("template {template}: placeholder {{{name}}} is not declared")]
    UndeclaredPlaceholder { template: TemplateId, name: String },
    #[error("template {template}: no value bound for {{{name}}}")]
    Unbound { template: TemplateId, name: String },
    #[error("catalog has no {0} template")]
    MissingTemplate(TemplateId),
    #[error("prompt needs about {estimated} tokens, over the budget of {budget}")]
    OverBudget { estimated: usize, budget: usize },
    #[error("reading templates: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub template: TemplateId,
    pub style: DelimiterStyle,
    pub messages: Vec<ChatMessage>,
}

impl RenderedPrompt {
    /// The last user turn, which carries the request itself.
    pub fn user_content(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str())
    }

    pub fn char_count(&self) -> usize {
        self.messages
            .iter()
            .map(|m| m.content.chars().count())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuntimeMode {
    Fix,
    Request,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    /// Language of generated programs, substituted for `{language}`.
    pub language: String,
    pub max_related: usize,
    /// Prompt size limit in estimated tokens.
    pub token_budget: usize,
    /// Characters per token used for the estimate.
    pub chars_per_token: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            language: "Python".to_string(),
            max_related: 3,
            token_budget: 16_000,
            chars_per_token: 4,
        }
    }
}

const BUILTIN_TEMPLATES: [(&str, &str); 10] = [
    (
        "concept_main.tmpl",
        include_str!("../../templates/concept_main.tmpl"),
    ),
    (
        "concept_keywords.tmpl",
        include_str!("../../templates/concept_keywords.tmpl"),
    ),
    (
        "concept_related.tmpl",
        include_str!("../../templates/concept_related.tmpl"),
    ),
    (
        "keyword_define.tmpl",
        include_str!("../../templates/keyword_define.tmpl"),
    ),
    (
        "code_main.tmpl",
        include_str!("../../templates/code_main.tmpl"),
    ),
    (
        "code_related.tmpl",
        include_str!("../../templates/code_related.tmpl"),
    ),
    (
        "buildup_lint.tmpl",
        include_str!("../../templates/buildup_lint.tmpl"),
    ),
    (
        "buildup_runtime.tmpl",
        include_str!("../../templates/buildup_runtime.tmpl"),
    ),
    (
        "buildup_request.tmpl",
        include_str!("../../templates/buildup_request.tmpl"),
    ),
    (
        "buildup_chain.tmpl",
        include_str!("../../templates/buildup_chain.tmpl"),
    ),
];

/// One template per id, validated when loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptCatalog {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

impl PromptCatalog {
    pub fn builtin() -> Self {
        Self::from_sources(
            BUILTIN_TEMPLATES
                .iter()
                .map(|(n, s)| (n.to_string(), s.to_string())),
        )
        .expect("bundled templates are valid")
    }

    pub fn from_sources(
        sources: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, PromptError> {
        let mut templates = BTreeMap::new();
        for (origin, source) in sources {
            let t = PromptTemplate::parse(&source, &origin)?;
            if templates.insert(t.id, t).is_some() {
                return Err(PromptError::Template {
                    origin,
                    reason: "duplicate template id".into(),
                });
            }
        }
        for id in TemplateId::ALL {
            if !templates.contains_key(&id) {
                return Err(PromptError::MissingTemplate(id));
            }
        }
        Ok(PromptCatalog { templates })
    }

    /// Loads every `*.tmpl` file in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let io = |e: std::io::Error| PromptError::Io(format!("{}: {e}", dir.display()));
        let mut sources = Vec::new();
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "tmpl"))
            .collect();
        paths.sort();
        for p in paths {
            let text = std::fs::read_to_string(&p).map_err(io)?;
            sources.push((p.display().to_string(), text));
        }
        Self::from_sources(sources)
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }
}

fn non_empty(value: &str, what: &'static str) -> Result<(), PromptError> {
    if value.trim().is_empty() {
        Err(PromptError::EmptyInput(what))
    } else {
        Ok(())
    }
}

/// Renders the prompt chains. Rendering is a pure function of the catalog,
/// the config and the arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptEngine {
    catalog: PromptCatalog,
    config: PromptConfig,
}

impl Default for PromptEngine {
    fn default() -> Self {
        PromptEngine::new(PromptCatalog::builtin(), PromptConfig::default())
    }
}

impl PromptEngine {
    pub fn new(catalog: PromptCatalog, config: PromptConfig) -> Self {
        PromptEngine { catalog, config }
    }

    pub fn config(&self) -> &PromptConfig {
        &self.config
    }

    pub fn catalog(&self) -> &PromptCatalog {
        &self.catalog
    }

    pub fn style(&self, id: TemplateId) -> DelimiterStyle {
        self.catalog.get(id).delimiter_style
    }

    fn builtins(&self) -> BTreeMap<&'static str, String> {
        BTreeMap::from([
            ("language", self.config.language.clone()),
            ("max_related", self.config.max_related.to_string()),
        ])
    }

    fn estimate(&self, prompt: &RenderedPrompt) -> usize {
        prompt
            .char_count()
            .div_ceil(self.config.chars_per_token.max(1))
    }

    /// Renders `parts` into one user turn under the first part's role and
    /// delimiter style. `context` entries become an earlier user turn.
    fn render(
        &self,
        parts: &[TemplateId],
        bindings: &[(&'static str, &str)],
        context: &[String],
    ) -> Result<RenderedPrompt, PromptError> {
        let main = self.catalog.get(parts[0]);
        let style = main.delimiter_style;
        let bound: BTreeMap<&str, String> =
            bindings.iter().map(|(k, v)| (*k, v.to_string())).collect();
        let builtins = self.builtins();
        let mut sections = Vec::with_capacity(parts.len());
        for id in parts {
            sections.push(self.catalog.get(*id).render(&bound, &builtins, style)?);
        }
        let mut messages = vec![ChatMessage::system(main.role_preamble.clone())];
        if !context.is_empty() {
            let mut ctx = String::from("Context from earlier in this session:");
            for item in context {
                ctx.push_str(&format!(
                    "\n\n{}\n{}\n{}",
                    style.open(),
                    escape(item, style),
                    style.close()
                ));
            }
            messages.push(ChatMessage::user(ctx));
        }
        messages.push(ChatMessage::user(sections.join("\n\n")));
        let prompt = RenderedPrompt {
            template: parts[0],
            style,
            messages,
        };
        let estimated = self.estimate(&prompt);
        if estimated > self.config.token_budget {
            return Err(PromptError::OverBudget {
                estimated,
                budget: self.config.token_budget,
            });
        }
        Ok(prompt)
    }

    pub fn render_concept(&self, question: &str) -> Result<RenderedPrompt, PromptError> {
        self.render_concept_with_context(question, &[])
    }

    pub fn render_concept_with_context(
        &self,
        question: &str,
        context: &[String],
    ) -> Result<RenderedPrompt, PromptError> {
        non_empty(question, "question")?;
        self.render(
            &[
                TemplateId::ConceptMain,
                TemplateId::ConceptKeywords,
                TemplateId::ConceptRelated,
            ],
            &[("question", question.trim())],
            context,
        )
    }

    pub fn render_code(&self, question: &str) -> Result<RenderedPrompt, PromptError> {
        self.render_code_with_context(question, &[])
    }

    pub fn render_code_with_context(
        &self,
        question: &str,
        context: &[String],
    ) -> Result<RenderedPrompt, PromptError> {
        non_empty(question, "question")?;
        self.render(
            &[TemplateId::CodeMain, TemplateId::CodeRelated],
            &[("question", question.trim())],
            context,
        )
    }

    pub fn render_buildup_lint(
        &self,
        message: &LintMessage,
        code: &str,
    ) -> Result<RenderedPrompt, PromptError> {
        non_empty(code, "code")?;
        let line = message.line.to_string();
        let column = message.column.to_string();
        self.render(
            &[TemplateId::BuildupLint],
            &[
                ("rule", &message.rule),
                ("line", &line),
                ("column", &column),
                ("message", &message.text),
                ("code", code),
            ],
            &[],
        )
    }

    pub fn render_buildup_runtime(
        &self,
        err_or_req: &str,
        mode: RuntimeMode,
        code: &str,
    ) -> Result<RenderedPrompt, PromptError> {
        non_empty(err_or_req, "error or request")?;
        non_empty(code, "code")?;
        let text = err_or_req.trim();
        match mode {
            RuntimeMode::Fix => self.render(
                &[TemplateId::BuildupRuntime],
                &[("error", text.trim_end_matches(['?', '.'])), ("code", code)],
                &[],
            ),
            RuntimeMode::Request => self.render(
                &[TemplateId::BuildupRequest],
                &[("request", text.trim_end_matches('.')), ("code", code)],
                &[],
            ),
        }
    }

    pub fn render_buildup_chain(
        &self,
        next_question: &str,
        final_code: &str,
    ) -> Result<RenderedPrompt, PromptError> {
        non_empty(next_question, "question")?;
        non_empty(final_code, "code")?;
        self.render(
            &[TemplateId::BuildupChain],
            &[("question", next_question.trim()), ("code", final_code)],
            &[],
        )
    }

    pub fn render_keyword_define(
        &self,
        keyword: &Keyword,
        context: &str,
    ) -> Result<RenderedPrompt, PromptError> {
        non_empty(&keyword.surface, "keyword")?;
        self.render(
            &[TemplateId::KeywordDefine],
            &[("keyword", keyword.surface.trim()), ("context", context)],
            &[],
        )
    }

    /// The original prompt plus a reminder of the reply format.
    pub fn render_reask(&self, prompt: &RenderedPrompt, error: &ReplyError) -> RenderedPrompt {
        let mut again = prompt.clone();
        again.messages.push(ChatMessage::user(format!(
            "Your previous reply could not be used ({error}). Answer the request above again and follow the requested format exactly."
        )));
        again
    }

    pub fn parse_reply(
        &self,
        raw: &str,
        expected: ReplyKind,
        style: DelimiterStyle,
    ) -> Result<StructuredReply, ReplyError> {
        parse_reply(raw, expected, style)
    }

    /// Builds the concept answer from a parsed reply. Keywords that do not
    /// occur in the explanation are dropped, and related pairs beyond
    /// `max_related` are cut; both are reported as warnings.
    pub fn concept_answer(
        &self,
        reply: &StructuredReply,
    ) -> Result<(ConceptAnswer, Vec<String>), ReplyError> {
        let mut warnings = Vec::new();
        let explanation = reply.explanation().unwrap_or_default().to_string();
        let lower = explanation.to_lowercase();
        let mut keywords = Vec::new();
        for k in &reply.keywords {
            if lower.contains(&k.to_lowercase()) {
                keywords.push(Keyword {
                    surface: k.clone(),
                    definition: None,
                });
            } else {
                warnings.push(format!("keyword {k:?} does not occur in the explanation"));
            }
        }
        if keywords.is_empty() {
            return Err(ReplyError::ParseFailure {
                section: "keywords".into(),
                detail: "no keyword occurs in the explanation".into(),
            });
        }
        let mut related = reply.related.clone();
        if related.len() > self.config.max_related {
            warnings.push(format!(
                "{} related pairs, keeping the first {}",
                related.len(),
                self.config.max_related
            ));
            related.truncate(self.config.max_related);
        }
        Ok((
            ConceptAnswer {
                explanation,
                keywords,
                related,
            },
            warnings,
        ))
    }
}

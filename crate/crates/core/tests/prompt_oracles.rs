//! Reply parsing checked against a separate line-oriented reader, and
//! rendering checked for purity and budget handling.

use proptest::prelude::*;
use tutorloop_core::prompt::contract::{code_reply, concept_reply};
use tutorloop_core::prompt::{
    parse_reply, DelimiterStyle, PromptCatalog, PromptConfig, PromptEngine, PromptError, ReplyKind,
    RuntimeMode,
};
use tutorloop_core::session::RelatedQa;
use tutorloop_core::verifier::LintMessage;

const CONCEPT_FIXTURE: &str = "\
EXPLANATION:
Dynamic programming solves a problem by combining answers to overlapping
subproblems. Memoization stores each answer the first time it is computed,
and tabulation fills a table bottom-up.

KEYWORDS:
- dynamic programming
- memoization
- tabulation

RELATED:
Q: When does dynamic programming apply?
A: When subproblems overlap and the optimal answer is built from optimal parts.
Q: Is memoization always faster?
A: Only when the same subproblem is requested more than once.
";

/// Sections in the simplest possible way: a header line starts a section,
/// and each section's lines are collected verbatim.
fn reference_sections(raw: &str) -> (String, Vec<String>, Vec<(String, String)>) {
    let mut current = "";
    let mut explanation = Vec::new();
    let mut keywords = Vec::new();
    let mut related = Vec::new();
    let mut pending_q: Option<String> = None;
    for line in raw.lines() {
        match line.trim() {
            "EXPLANATION:" => current = "e",
            "KEYWORDS:" => current = "k",
            "RELATED:" => current = "r",
            text => match current {
                "e" => explanation.push(line.to_string()),
                "k" if !text.is_empty() => keywords.push(text.trim_start_matches("- ").to_string()),
                "r" if text.starts_with("Q: ") => pending_q = Some(text[3..].to_string()),
                "r" if text.starts_with("A: ") => {
                    related.push((pending_q.take().unwrap(), text[3..].to_string()))
                }
                _ => {}
            },
        }
    }
    (explanation.join("\n").trim().to_string(), keywords, related)
}

#[test]
fn concept_fixture_matches_the_reference_reader() {
    let reply = parse_reply(
        CONCEPT_FIXTURE,
        ReplyKind::ConceptSections,
        DelimiterStyle::TripleQuote,
    )
    .unwrap();
    let (explanation, keywords, related) = reference_sections(CONCEPT_FIXTURE);
    assert_eq!(reply.explanation().unwrap(), explanation);
    assert_eq!(reply.keywords, keywords);
    assert_eq!(reply.keywords.len(), 3);
    let pairs: Vec<(String, String)> = reply
        .related
        .iter()
        .map(|r| (r.question.clone(), r.answer.clone()))
        .collect();
    assert_eq!(pairs, related);
    assert_eq!(pairs.len(), 2);

    let (answer, warnings) = PromptEngine::default().concept_answer(&reply).unwrap();
    assert!(warnings.is_empty());
    let lower = answer.explanation.to_lowercase();
    assert!(answer
        .keywords
        .iter()
        .all(|k| lower.contains(&k.surface.to_lowercase())));
}

#[test]
fn rendering_is_pure() {
    let e = PromptEngine::default();
    let msg = LintMessage {
        file: "main.py".into(),
        line: 3,
        column: 7,
        rule: "F821".into(),
        text: "undefined name 'x'".into(),
    };
    let code = "a = 1\nb = 2\nprint(x)\n";
    assert_eq!(
        e.render_concept("What is a heap?").unwrap(),
        e.render_concept("What is a heap?").unwrap()
    );
    assert_eq!(
        e.render_buildup_lint(&msg, code).unwrap(),
        e.render_buildup_lint(&msg, code).unwrap()
    );
    assert_eq!(
        e.render_buildup_runtime(
            "ZeroDivisionError: division by zero",
            RuntimeMode::Fix,
            code
        )
        .unwrap(),
        e.render_buildup_runtime(
            "ZeroDivisionError: division by zero",
            RuntimeMode::Fix,
            code
        )
        .unwrap()
    );
}

#[test]
fn guards_reject_blank_inputs() {
    let e = PromptEngine::default();
    assert!(matches!(
        e.render_buildup_chain("   ", "x = 1"),
        Err(PromptError::EmptyInput(_))
    ));
    assert!(matches!(
        e.render_buildup_runtime("", RuntimeMode::Fix, "x = 1"),
        Err(PromptError::EmptyInput(_))
    ));
    assert!(matches!(
        e.render_concept(""),
        Err(PromptError::EmptyInput(_))
    ));
}

#[test]
fn budget_counts_every_message() {
    let tight = PromptEngine::new(
        PromptCatalog::builtin(),
        PromptConfig {
            token_budget: 200,
            ..PromptConfig::default()
        },
    );
    let long_code = "print(1)\n".repeat(200);
    assert!(matches!(
        tight.render_buildup_chain("Add tests", &long_code),
        Err(PromptError::OverBudget { .. })
    ));
}

fn text_strategy() -> impl Strategy<Value = String> {
    // Words and punctuation, including the delimiter characters.
    proptest::collection::vec(
        prop_oneof![
            "[a-z]{1,8}",
            Just("\"\"\"".to_string()),
            Just("<code>".to_string()),
            Just("␛".to_string())
        ],
        1..12,
    )
    .prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn concept_contract_round_trips(
        words in proptest::collection::vec("[a-z]{3,9}", 3..8),
        q in "[A-Z][a-z ]{3,30}\\?",
        a in "[A-Z][a-z ]{3,40}\\.",
    ) {
        let keywords: Vec<&str> = words.iter().map(String::as_str).take(3).collect();
        let explanation = format!("This explains {}.", words.join(" and "));
        let related = vec![RelatedQa { question: q.trim().to_string(), answer: a.trim().to_string() }];
        let raw = concept_reply(&explanation, &keywords, &related);
        let reply = parse_reply(&raw, ReplyKind::ConceptSections, DelimiterStyle::TripleQuote).unwrap();
        prop_assert_eq!(reply.explanation().unwrap(), explanation.as_str());
        let mut expected: Vec<String> = Vec::new();
        for k in keywords {
            if !expected.iter().any(|e| e == k) {
                expected.push(k.to_string());
            }
        }
        prop_assert_eq!(&reply.keywords, &expected);
        prop_assert_eq!(&reply.related, &related);
    }

    #[test]
    fn code_contract_round_trips(body in text_strategy(), angle in any::<bool>()) {
        let style = if angle { DelimiterStyle::AngleTag } else { DelimiterStyle::TripleQuote };
        let code = format!("x = 1\n# {body}\nprint(x)");
        let raw = code_reply(&code, &[], style);
        let reply = parse_reply(&raw, ReplyKind::CodeOnly, style).unwrap();
        prop_assert_eq!(reply.code.as_deref(), Some(code.as_str()));
    }

    #[test]
    fn rendered_code_prompts_keep_markers_balanced(question in text_strategy()) {
        let e = PromptEngine::default();
        let p = e.render_code(&question).unwrap();
        let user = p.user_content();
        prop_assert_eq!(user.matches("<code>").count(), 1);
        prop_assert_eq!(user.matches("</code>").count(), 1);
    }
}

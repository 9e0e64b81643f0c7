//! End-to-end workflows against the scripted backend and the real verifier.

use std::sync::Arc;

use tutorloop_core::clock::ManualClock;
use tutorloop_core::config::EngineConfig;
use tutorloop_core::gateway::{Script, ScriptEntry, ScriptedBackend};
use tutorloop_core::orchestrator::{Engine, EngineError, RepairRequest};
use tutorloop_core::prompt::contract::{code_reply, concept_reply, definition_reply};
use tutorloop_core::prompt::{DelimiterStyle, PromptEngine, RuntimeMode, TemplateId};
use tutorloop_core::router::{Route, Router};
use tutorloop_core::session::{
    EventKind, FailureKind, RelatedQa, RepairTrigger, Session, SessionError, StepReport,
    SubTaskKind, SubTaskStatus,
};
use tutorloop_core::verifier::{LintVerdict, RunVerdict, Verifier};

/// Coding when the question asks for an implementation or tests.
struct VerbRouter;

impl Router for VerbRouter {
    fn route(&self, text: &str) -> Result<Route, String> {
        let code = ["Implement", "Write", "Build", "Extend"]
            .iter()
            .any(|v| text.starts_with(v));
        Ok(Route {
            kind: if code {
                SubTaskKind::Code
            } else {
                SubTaskKind::Concept
            },
            p_code: None,
        })
    }
}

fn engine(script: Script) -> (Engine, Arc<ScriptedBackend>) {
    let clock = Arc::new(ManualClock::new(1_700_000_000_000, 1));
    let backend = Arc::new(ScriptedBackend::new(script, clock.clone()));
    let engine = Engine::new(
        backend.clone(),
        Arc::new(VerbRouter),
        Arc::new(PromptEngine::default()),
        Arc::new(Verifier::default()),
        clock,
    );
    (engine, backend)
}

fn auto() -> EngineConfig {
    EngineConfig {
        auto_accept_on_pass: true,
        ..EngineConfig::default()
    }
}

fn session(config: EngineConfig) -> Session {
    Session::with_id("t", None, config).unwrap()
}

fn code(c: &str) -> String {
    code_reply(c, &[], DelimiterStyle::AngleTag)
}

fn lfu_concept() -> String {
    concept_reply(
        "An LFU cache evicts the entry with the lowest access frequency when it is full. \
         Ties are broken by recency, so each frequency keeps its own ordered list.",
        &["LFU cache", "access frequency", "recency"],
        &[RelatedQa {
            question: "How does LFU differ from LRU?".into(),
            answer: "LRU looks only at recency, LFU counts uses.".into(),
        }],
    )
}

const LFU_CODE: &str = "\
from collections import defaultdict, OrderedDict


class LFUCache:
    def __init__(self, capacity):
        self.capacity = capacity
        self.values = {}
        self.freq = {}
        self.buckets = defaultdict(OrderedDict)
        self.min_freq = 0

    def _touch(self, key):
        f = self.freq[key]
        del self.buckets[f][key]
        if not self.buckets[f] and self.min_freq == f:
            self.min_freq += 1
        self.freq[key] = f + 1
        self.buckets[f + 1][key] = None

    def get(self, key):
        if key not in self.values:
            return -1
        self._touch(key)
        return self.values[key]

    def put(self, key, value):
        if self.capacity == 0:
            return
        if key in self.values:
            self.values[key] = value
            self._touch(key)
            return
        if len(self.values) >= self.capacity:
            old, _ = self.buckets[self.min_freq].popitem(last=False)
            del self.values[old]
            del self.freq[old]
        self.values[key] = value
        self.freq[key] = 1
        self.buckets[1][key] = None
        self.min_freq = 1


cache = LFUCache(2)
cache.put(1, 1)
cache.put(2, 2)
cache.get(1)
cache.put(3, 3)
print(cache.get(2), cache.get(3))
";

#[test]
fn concept_question_completes_with_keywords_in_the_explanation() {
    let (e, backend) = engine(Script::from_texts([lfu_concept()]));
    let mut s = session(auto());
    let id = e.handle_subtask(&mut s, "What is an LFU cache?").unwrap();
    let t = s.subtask(id).unwrap();
    assert_eq!(
        (t.status, t.kind),
        (SubTaskStatus::Completed, SubTaskKind::Concept)
    );
    let c = t.concept().unwrap();
    let lower = c.explanation.to_lowercase();
    assert_eq!(c.keywords.len(), 3);
    assert!(c
        .keywords
        .iter()
        .all(|k| lower.contains(&k.surface.to_lowercase())));
    assert_eq!(t.llm_calls, 1);
    assert_eq!(backend.cursor(), 1);
}

#[test]
fn coding_question_completes_with_clean_code() {
    let (e, _) = engine(Script::from_texts([code_reply(
        LFU_CODE,
        &[RelatedQa {
            question: "What is the complexity of get?".into(),
            answer: "Constant time on average.".into(),
        }],
        DelimiterStyle::AngleTag,
    )]));
    let mut s = session(auto());
    let id = e
        .handle_subtask(&mut s, "Implement an LFU data structure")
        .unwrap();
    let t = s.subtask(id).unwrap();
    assert_eq!(
        (t.status, t.kind),
        (SubTaskStatus::Completed, SubTaskKind::Code),
        "{:?}",
        t.reason
    );
    let c = t.code().unwrap();
    assert_eq!(c.revision, 0);
    assert_eq!(c.lint.as_ref().unwrap().verdict(), LintVerdict::Pass);
    assert_eq!(c.run.as_ref().unwrap().verdict, RunVerdict::Ok);
    assert_eq!(c.run.as_ref().unwrap().stdout, "-1 3\n");
    assert_eq!(c.related.len(), 1);
    assert!(t.trace.is_empty());
}

#[test]
fn a_second_question_while_one_is_open_is_busy() {
    let (e, _) = engine(Script::from_texts([lfu_concept(), lfu_concept()]));
    let mut s = session(EngineConfig::default());
    let id = e.handle_subtask(&mut s, "What is an LFU cache?").unwrap();
    assert_eq!(s.subtask(id).unwrap().status, SubTaskStatus::InProgress);
    let err = e
        .handle_subtask(&mut s, "What is an LRU cache?")
        .unwrap_err();
    assert!(matches!(err, EngineError::Session(SessionError::Busy(1))));
    e.accept(&mut s).unwrap();
    assert_eq!(s.subtask(id).unwrap().status, SubTaskStatus::Completed);
    e.handle_subtask(&mut s, "What is an LRU cache?").unwrap();
}

#[test]
fn one_malformed_reply_is_asked_again() {
    let (e, backend) = engine(Script::from_texts([
        "I think caches are neat.".to_string(),
        lfu_concept(),
    ]));
    let mut s = session(auto());
    let id = e.handle_subtask(&mut s, "What is an LFU cache?").unwrap();
    let t = s.subtask(id).unwrap();
    assert_eq!(t.status, SubTaskStatus::Completed);
    assert_eq!(t.llm_calls, 2);
    let responses = s
        .events()
        .iter()
        .filter(|e| e.kind() == EventKind::ResponseReceived)
        .count();
    assert_eq!(responses, 2);
    assert!(backend.calls()[1]
        .user_content()
        .contains("could not be used"));
}

#[test]
fn two_malformed_replies_fail_the_subtask() {
    let (e, _) = engine(Script::from_texts(["no sections", "still no sections"]));
    let mut s = session(auto());
    let id = e.handle_subtask(&mut s, "What is an LFU cache?").unwrap();
    let t = s.subtask(id).unwrap();
    assert_eq!(
        (t.status, t.failure),
        (SubTaskStatus::Failed, Some(FailureKind::ParseFailure))
    );
    assert_eq!(t.llm_calls, 2);
}

#[test]
fn seeded_undefined_name_is_fixed_in_one_buildup() {
    let (e, backend) = engine(Script::from_texts([
        code("def area(r):\n    return pi * r * r\n\nprint(area(2))\n"),
        code("from math import pi\n\n\ndef area(r):\n    return pi * r * r\n\nprint(area(2))\n"),
    ]));
    let mut s = session(auto());
    let id = e
        .handle_subtask(&mut s, "Implement a circle area function")
        .unwrap();
    let t = s.subtask(id).unwrap();
    assert_eq!(t.status, SubTaskStatus::Completed, "{:?}", t.reason);
    let c = t.code().unwrap();
    assert_eq!(c.revision, 1);
    assert!(c.lint_passed());
    assert_eq!(t.trace.len(), 1);
    let step = &t.trace[0];
    assert_eq!(step.trigger, RepairTrigger::Lint);
    assert_eq!(step.target.as_ref().unwrap().rule, "F821");
    assert!(step.q_buildup.contains("undefined name 'pi'"));
    assert_eq!(step.code_after.as_deref(), Some(c.code.as_str()));
    assert_eq!(backend.calls()[1].template, TemplateId::BuildupLint);
}

#[test]
fn identical_buggy_replies_exhaust_the_budget_without_progress() {
    let (e, _) = engine(Script::from_texts([code("print(y)\n")]).repeating());
    let mut s = session(auto().with_repair_iters(2));
    let id = e.handle_subtask(&mut s, "Implement printing").unwrap();
    let t = s.subtask(id).unwrap();
    assert_eq!(
        (t.status, t.failure),
        (SubTaskStatus::Failed, Some(FailureKind::LoopExhausted))
    );
    assert_eq!(t.trace.len(), 2);
    assert!(t.no_progress && t.trace.iter().all(|s| s.no_progress));
    assert!(t.reason.as_deref().unwrap().contains("no progress"));
    for pair in t.trace.windows(2) {
        assert_eq!(
            pair[0].code_after.as_deref(),
            Some(pair[1].code_before.as_str())
        );
    }
}

#[test]
fn a_user_selected_lint_message_is_embedded() {
    let buggy = "print(alpha)\nprint(beta)\n";
    let (e, backend) = engine(Script::from_texts([
        code(buggy),
        code("beta = 2\nprint(beta)\n"),
    ]));
    let mut s = session(EngineConfig {
        auto_lint_repair: false,
        ..EngineConfig::default()
    });
    let id = e.handle_subtask(&mut s, "Implement printing").unwrap();
    let t = s.subtask(id).unwrap();
    assert_eq!(t.status, SubTaskStatus::InProgress);
    let messages = t.code().unwrap().lint.as_ref().unwrap().messages().to_vec();
    assert_eq!(messages.len(), 2);
    let second = messages[1].clone();
    assert_eq!(second.line, 2);

    e.repair(&mut s, RepairRequest::Lint(Some(second.clone())))
        .unwrap();
    let t = s.subtask(id).unwrap();
    assert_eq!(t.trace.len(), 1);
    assert_eq!(t.trace[0].target.as_ref(), Some(&second));
    assert!(t.trace[0].q_buildup.contains("undefined name 'beta'"));
    assert!(!t.trace[0].q_buildup.contains("undefined name 'alpha'"));
    assert!(backend.calls()[1].user_content().contains("'beta'"));
    assert!(t.code().unwrap().lint_passed());

    let stale = messages[0].clone();
    assert!(matches!(
        e.repair(&mut s, RepairRequest::Lint(Some(stale))),
        Err(EngineError::NothingToRepair)
    ));
    e.accept(&mut s).unwrap();
}

#[test]
fn runtime_error_is_fixed_and_rerun() {
    let (e, backend) = engine(Script::from_texts([
        code("def ratio(a, b):\n    return a / b\n\nprint(ratio(1, 0))\n"),
        code("def ratio(a, b):\n    if b == 0:\n        return 0.0\n    return a / b\n\nprint(ratio(1, 0))\n"),
    ]));
    let mut s = session(auto());
    let id = e
        .handle_subtask(&mut s, "Implement a ratio helper")
        .unwrap();
    let t = s.subtask(id).unwrap();
    assert_eq!(t.status, SubTaskStatus::Completed, "{:?}", t.reason);
    assert_eq!(t.trace.len(), 1);
    assert_eq!(t.trace[0].trigger, RepairTrigger::Runtime);
    assert!(t.trace[0].q_buildup.contains("ZeroDivisionError"));
    assert_eq!(backend.calls()[1].template, TemplateId::BuildupRuntime);
    let run = t.code().unwrap().run.as_ref().unwrap();
    assert_eq!(
        (run.verdict, run.stdout.as_str()),
        (RunVerdict::Ok, "0.0\n")
    );
    assert!(
        matches!(&t.trace[0].report_after, Some(StepReport::Run(r)) if r.verdict == RunVerdict::Ok)
    );
}

#[test]
fn a_feature_request_needs_only_lint_and_acceptance() {
    let (e, backend) = engine(Script::from_texts([
        code("def calc(expr):\n    return eval(expr)\n\nprint(calc('1 + 2'))\n"),
        code("def calc(expr):\n    return eval(expr)\n\nprint(calc('(1 + 2) * 3'))\n"),
    ]));
    let mut s = session(EngineConfig {
        run_code: false,
        ..EngineConfig::default()
    });
    let id = e
        .handle_subtask(&mut s, "Build a basic calculator")
        .unwrap();
    e.repair(
        &mut s,
        RepairRequest::Runtime {
            mode: RuntimeMode::Request,
            text: "add parentheses support".into(),
        },
    )
    .unwrap();
    let t = s.subtask(id).unwrap();
    assert_eq!(t.status, SubTaskStatus::InProgress);
    assert_eq!(t.trace[0].trigger, RepairTrigger::UserRequest);
    assert!(t.trace[0]
        .q_buildup
        .contains("I want to add parentheses support"));
    assert_eq!(backend.calls()[1].template, TemplateId::BuildupRequest);
    assert!(t.code().unwrap().run.is_none());
    e.accept(&mut s).unwrap();
    assert_eq!(s.subtask(id).unwrap().status, SubTaskStatus::Completed);
}

#[test]
fn a_fix_that_breaks_lint_chains_into_the_lint_loop() {
    let (e, _) = engine(Script::from_texts([
        code("x = 0\nprint(1 / x)\n"),
        code("x = 0\nprint(1 / (x or fallback))\n"),
        code("fallback = 1\nx = 0\nprint(1 / (x or fallback))\n"),
    ]));
    let mut s = session(auto());
    let id = e.handle_subtask(&mut s, "Implement a division").unwrap();
    let t = s.subtask(id).unwrap();
    assert_eq!(t.status, SubTaskStatus::Completed, "{:?}", t.reason);
    let triggers: Vec<RepairTrigger> = t.trace.iter().map(|s| s.trigger).collect();
    assert_eq!(triggers, [RepairTrigger::Runtime, RepairTrigger::Lint]);
    assert!(
        matches!(&t.trace[0].report_after, Some(StepReport::Lint(r)) if r.verdict() == LintVerdict::Fail)
    );
    assert!(
        matches!(&t.trace[1].report_after, Some(StepReport::Run(r)) if r.verdict == RunVerdict::Ok)
    );
    assert!(t.code().unwrap().lint_passed());
    for pair in t.trace.windows(2) {
        assert_eq!(
            pair[0].code_after.as_deref(),
            Some(pair[1].code_before.as_str())
        );
    }
}

#[test]
fn keywords_can_be_defined_and_redefined() {
    let (e, _) = engine(Script::from_texts([
        lfu_concept(),
        definition_reply("How often an entry has been read or written."),
        definition_reply("The number of uses of an entry."),
    ]));
    let mut s = session(auto());
    let id = e.handle_subtask(&mut s, "What is an LFU cache?").unwrap();
    let k = e.define_keyword(&mut s, id, "access frequency").unwrap();
    assert!(!k.definition.unwrap().is_empty());
    assert!(matches!(
        e.define_keyword(&mut s, id, "bloom filter"),
        Err(EngineError::UnknownKeyword(_))
    ));
    e.define_keyword(&mut s, id, "Access Frequency").unwrap();
    let c = s.subtask(id).unwrap().concept().unwrap();
    assert_eq!(
        c.keyword("access frequency").unwrap().definition.as_deref(),
        Some("The number of uses of an entry.")
    );
    let defined = s
        .events()
        .iter()
        .filter(|e| e.kind() == EventKind::KeywordDefined)
        .count();
    assert_eq!(defined, 2);
}

#[test]
fn coding_followups_build_on_the_last_code() {
    let trie = "class Trie:\n    def __init__(self):\n        self.children = {}\n\nprint(Trie().children)\n";
    let tests = "class Trie:\n    def __init__(self):\n        self.children = {}\n\nassert Trie().children == {}\nprint('ok')\n";
    let (e, backend) = engine(Script::from_texts([code(trie), code(tests), lfu_concept()]));
    let mut s = session(auto());
    let first = e.handle_subtask(&mut s, "Implement a trie").unwrap();
    assert_eq!(s.subtask(first).unwrap().status, SubTaskStatus::Completed);

    let second = e
        .followup_buildup(
            &mut s,
            "Write test cases to verify the correctness of the trie",
            false,
        )
        .unwrap();
    let prompt = &backend.calls()[1];
    assert_eq!(prompt.template, TemplateId::BuildupChain);
    assert!(prompt.user_content().contains("self.children = {}"));
    let t = s.subtask(second).unwrap();
    assert_eq!(
        (t.status, t.followup_of),
        (SubTaskStatus::Completed, Some(first))
    );

    e.followup_buildup(&mut s, "What is a suffix tree?", false)
        .unwrap();
    let prompt = &backend.calls()[2];
    assert_eq!(prompt.template, TemplateId::ConceptMain);
    assert!(prompt
        .messages
        .iter()
        .all(|m| !m.content.contains("self.children")));
}

#[test]
fn forced_buildup_needs_prior_code() {
    let (e, _) = engine(Script::from_texts([lfu_concept()]));
    let mut s = session(auto());
    assert!(matches!(
        e.followup_buildup(&mut s, "Write tests", true),
        Err(EngineError::NoPriorCode)
    ));
    assert!(s.events().is_empty());
}

#[test]
fn llm_calls_stay_within_the_bound() {
    let cases: Vec<(Vec<String>, u32)> = vec![
        (vec!["junk".into(), code("print(y)\n")], 3),
        (vec![code("x = 0\nprint(1 / x)\n")], 2),
        (vec!["junk".into(), "junk".into()], 3),
    ];
    for (texts, iters) in cases {
        let (e, _) = engine(Script::from_texts(texts).repeating());
        let mut s = session(auto().with_repair_iters(iters));
        let id = e.handle_subtask(&mut s, "Implement something").unwrap();
        let t = s.subtask(id).unwrap();
        assert!(t.status.is_terminal());
        assert!(t.llm_calls <= 2 + 2 * iters, "{} calls", t.llm_calls);
        assert!(t.trace.len() as u32 <= 2 * iters);
    }
}

#[test]
fn a_slow_backend_times_the_subtask_out() {
    let script = Script {
        strict: true,
        responses: vec![ScriptEntry {
            text: Some(lfu_concept()),
            status: None,
            delay_ms: 10_000,
        }],
        rules: Vec::new(),
    };
    let (e, _) = engine(script);
    let mut s = session(EngineConfig {
        subtask_timeout_secs: 2.0,
        ..auto()
    });
    let id = e.handle_subtask(&mut s, "What is an LFU cache?").unwrap();
    let t = s.subtask(id).unwrap();
    assert_eq!(
        (t.status, t.failure),
        (SubTaskStatus::TimedOut, Some(FailureKind::Deadline))
    );
    assert!(t.elapsed_secs >= 2.0);
}

#[test]
fn backend_failures_fail_the_subtask() {
    let script = Script {
        strict: true,
        responses: vec![ScriptEntry {
            text: Some("overloaded".into()),
            status: Some(503),
            delay_ms: 0,
        }],
        rules: Vec::new(),
    };
    let (e, _) = engine(script);
    let mut s = session(auto());
    let id = e.handle_subtask(&mut s, "What is an LFU cache?").unwrap();
    let t = s.subtask(id).unwrap();
    assert_eq!(
        (t.status, t.failure),
        (SubTaskStatus::Failed, Some(FailureKind::Backend))
    );
}

#[test]
fn scripted_runs_have_identical_transcripts() {
    let run = || {
        let (e, _) = engine(Script::from_texts([
            code("def f(a):\n    return a / b\n\nprint(f(1))\n"),
            code("b = 2\n\n\ndef f(a):\n    return a / b\n\nprint(f(1))\n"),
            lfu_concept(),
        ]));
        let mut s = session(auto());
        e.handle_subtask(&mut s, "Implement f").unwrap();
        e.followup_buildup(&mut s, "What is an LFU cache?", false)
            .unwrap();
        let mut out = Vec::new();
        tutorloop_core::session::write_transcript(&mut out, s.events()).unwrap();
        // Run durations come from the real process clock.
        String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                if let Some(r) = v.pointer_mut("/payload/report/duration_secs") {
                    *r = 0.into();
                }
                v.to_string()
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

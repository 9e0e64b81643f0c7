use proptest::prelude::*;
use tutorloop_core::bench::bundled_suite;
use tutorloop_core::clock::{Clock, ManualClock};
use tutorloop_core::config::EngineConfig;
use tutorloop_core::prompt::{ChatMessage, TemplateId};
use tutorloop_core::session::{
    read_transcript, write_transcript, AnswerUpdate, EventBody, Outcome, Session, SessionError,
    SessionEvent, SubTaskKind, SubTaskStatus,
};
use tutorloop_core::verifier::{LintMessage, LintReport};

fn session() -> Session {
    Session::with_id("s", None, EngineConfig::default()).unwrap()
}

fn started(clock: &ManualClock, kind: SubTaskKind) -> (Session, u32) {
    let mut s = session();
    let id = s.start_subtask(clock, "What is a heap?", None).unwrap();
    s.record(
        clock,
        EventBody::Classified {
            subtask: id,
            kind,
            p_code: None,
        },
    )
    .unwrap();
    (s, id)
}

#[test]
fn new_session_examples() {
    let s = Session::new(None, EngineConfig::default()).unwrap();
    assert!(s.subtasks().is_empty() && s.events().is_empty());
    assert_eq!(s.last_seq(), 0);

    let sorting = bundled_suite()
        .into_iter()
        .find(|s| s.id == "sorting")
        .unwrap();
    let s = Session::new(Some(sorting), EngineConfig::default()).unwrap();
    assert_eq!(s.scenario.as_ref().unwrap().goals.len(), 4);

    let bad = EngineConfig::default().with_repair_iters(0);
    assert!(matches!(
        Session::new(None, bad),
        Err(SessionError::InvalidConfig(_))
    ));
}

#[test]
fn append_checks_the_sequence() {
    let clock = ManualClock::default();
    let mut s = session();
    s.start_subtask(&clock, "q", None).unwrap();
    assert_eq!(s.events().len(), 1);
    for _ in 0..4 {
        s.record(
            &clock,
            EventBody::PromptSent {
                subtask: 1,
                template: TemplateId::ConceptMain,
                messages: vec![ChatMessage::user("q")],
            },
        )
        .unwrap_err();
    }
    s.record(
        &clock,
        EventBody::Classified {
            subtask: 1,
            kind: SubTaskKind::Concept,
            p_code: Some(0.1),
        },
    )
    .unwrap();
    for _ in 0..3 {
        s.record(
            &clock,
            EventBody::PromptSent {
                subtask: 1,
                template: TemplateId::ConceptMain,
                messages: vec![ChatMessage::user("q")],
            },
        )
        .unwrap();
    }
    assert_eq!(s.last_seq(), 5);
    let gap = SessionEvent {
        seq: 7,
        ts_ms: 1000,
        body: EventBody::PromptSent {
            subtask: 1,
            template: TemplateId::ConceptMain,
            messages: vec![ChatMessage::user("q")],
        },
    };
    assert_eq!(
        s.append_event(gap),
        Err(SessionError::SequenceGap {
            expected: 6,
            got: 7
        })
    );
    assert_eq!(s.events().len(), 5);
}

#[test]
fn timestamps_may_not_go_backwards() {
    let mut s = session();
    let at = |seq, ts_ms| SessionEvent {
        seq,
        ts_ms,
        body: EventBody::SubTaskStarted {
            subtask: seq as u32,
            text: "q".into(),
            followup_of: None,
        },
    };
    s.append_event(at(1, 100)).unwrap();
    // The second start is also rejected as busy, but the clock check comes first.
    assert!(matches!(
        s.append_event(at(2, 50)),
        Err(SessionError::TimeWentBackwards { .. })
    ));
}

#[test]
fn finish_subtask_examples() {
    let clock = ManualClock::default();
    let (mut s, id) = started(&clock, SubTaskKind::Concept);
    s.finish_subtask(&clock, id, Outcome::Completed, 97.3, None, None)
        .unwrap();
    let t = s.subtask(id).unwrap();
    assert_eq!((t.status, t.elapsed_secs), (SubTaskStatus::Completed, 97.3));

    let mut s = session();
    let id = s.start_subtask(&clock, "q", None).unwrap();
    assert!(matches!(
        s.finish_subtask(&clock, id, Outcome::Completed, 10.0, None, None),
        Err(SessionError::IllegalTransition { .. })
    ));
    assert!(matches!(
        s.finish_subtask(&clock, 9, Outcome::Failed, 1.0, None, None),
        Err(SessionError::UnknownSubTask(9))
    ));

    let (mut s, id) = started(&clock, SubTaskKind::Concept);
    s.finish_subtask(&clock, id, Outcome::TimedOut, 3600.0, None, None)
        .unwrap();
    assert_eq!(s.subtask(id).unwrap().status, SubTaskStatus::TimedOut);
}

#[test]
fn late_completion_becomes_a_timeout() {
    let clock = ManualClock::default();
    let (mut s, id) = started(&clock, SubTaskKind::Concept);
    s.finish_subtask(&clock, id, Outcome::Completed, 3600.5, None, None)
        .unwrap();
    assert_eq!(s.subtask(id).unwrap().status, SubTaskStatus::TimedOut);
}

#[test]
fn code_cannot_complete_without_passing_lint() {
    let clock = ManualClock::default();
    let (mut s, id) = started(&clock, SubTaskKind::Code);
    s.record(
        &clock,
        EventBody::ResponseReceived {
            subtask: id,
            template: TemplateId::CodeMain,
            text: Some("raw".into()),
            usage: None,
            attempts: 1,
            answer: Some(AnswerUpdate::Code {
                code: "print(y)".into(),
                related: None,
            }),
            warnings: vec![],
            error: None,
        },
    )
    .unwrap();
    let failing = LintReport::new(
        vec![LintMessage {
            file: "main.py".into(),
            line: 1,
            column: 7,
            rule: "F821".into(),
            text: "undefined name 'y'".into(),
        }],
        1,
    );
    s.record(
        &clock,
        EventBody::LintRun {
            subtask: id,
            revision: 0,
            report: failing,
        },
    )
    .unwrap();
    assert!(s
        .finish_subtask(&clock, id, Outcome::Completed, 1.0, None, None)
        .is_err());
    s.record(
        &clock,
        EventBody::LintRun {
            subtask: id,
            revision: 0,
            report: LintReport::new(vec![], 0),
        },
    )
    .unwrap();
    s.finish_subtask(&clock, id, Outcome::Completed, 1.0, None, None)
        .unwrap();
}

fn scripted_session() -> Session {
    let clock = ManualClock::new(1_700_000_000_000, 7);
    let (mut s, id) = started(&clock, SubTaskKind::Concept);
    s.record(
        &clock,
        EventBody::ResponseReceived {
            subtask: id,
            template: TemplateId::ConceptMain,
            text: Some("EXPLANATION:\nA heap ✓ is a tree.".into()),
            usage: None,
            attempts: 2,
            answer: None,
            warnings: vec!["odd \"quote\"".into()],
            error: Some("missing KEYWORDS".into()),
        },
    )
    .unwrap();
    s.finish_subtask(
        &clock,
        id,
        Outcome::Failed,
        0.25,
        None,
        Some("parse".into()),
    )
    .unwrap();
    s.start_subtask(&clock, "Implement a heap", Some(id))
        .unwrap();
    s
}

#[test]
fn transcript_replay_is_lossless() {
    let s = scripted_session();
    let mut bytes = Vec::new();
    write_transcript(&mut bytes, s.events()).unwrap();
    let events = read_transcript(bytes.as_slice()).unwrap();
    let replayed = Session::replay(s.header(), events).unwrap();
    assert_eq!(replayed, s);
    assert_eq!(
        serde_json::to_string(&replayed).unwrap(),
        serde_json::to_string(&s).unwrap()
    );
    let mut again = Vec::new();
    write_transcript(&mut again, replayed.events()).unwrap();
    assert_eq!(again, bytes);

    let first = String::from_utf8(bytes).unwrap();
    let line: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    for field in ["seq", "ts_ms", "kind", "payload"] {
        assert!(line.get(field).is_some(), "{field}");
    }
}

#[derive(Debug, Clone)]
enum Op {
    Start(bool),
    Classify(u32, bool),
    Finish(u32, u8, f64),
    Code(u32, bool),
    Lint(u32, bool),
    Raw(u64),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        any::<bool>().prop_map(Op::Start),
        (1..6u32, any::<bool>()).prop_map(|(i, c)| Op::Classify(i, c)),
        (1..6u32, 0..3u8, 0.0..5000.0f64).prop_map(|(i, o, e)| Op::Finish(i, o, e)),
        (1..6u32, any::<bool>()).prop_map(|(i, b)| Op::Code(i, b)),
        (1..6u32, any::<bool>()).prop_map(|(i, p)| Op::Lint(i, p)),
        (0..12u64).prop_map(Op::Raw),
    ]
}

fn apply(s: &mut Session, clock: &ManualClock, op: Op) {
    let body = match op {
        Op::Start(follow) => {
            let _ = s.start_subtask(clock, "question", follow.then_some(1));
            return;
        }
        Op::Classify(subtask, code) => EventBody::Classified {
            subtask,
            kind: if code {
                SubTaskKind::Code
            } else {
                SubTaskKind::Concept
            },
            p_code: None,
        },
        Op::Finish(subtask, o, elapsed) => {
            let outcome = [Outcome::Completed, Outcome::Failed, Outcome::TimedOut][o as usize];
            let _ = s.finish_subtask(clock, subtask, outcome, elapsed, None, None);
            return;
        }
        Op::Code(subtask, buggy) => EventBody::ResponseReceived {
            subtask,
            template: TemplateId::CodeMain,
            text: None,
            usage: None,
            attempts: 1,
            answer: Some(AnswerUpdate::Code {
                code: if buggy { "print(y)" } else { "print(1)" }.into(),
                related: None,
            }),
            warnings: vec![],
            error: None,
        },
        Op::Lint(subtask, pass) => {
            let revision = s
                .subtask(subtask)
                .ok()
                .and_then(|t| t.code())
                .map_or(0, |c| c.revision);
            let messages = if pass {
                vec![]
            } else {
                vec![LintMessage {
                    file: "main.py".into(),
                    line: 1,
                    column: 1,
                    rule: "F821".into(),
                    text: "undefined name 'y'".into(),
                }]
            };
            EventBody::LintRun {
                subtask,
                revision,
                report: LintReport::new(messages, if pass { 0 } else { 1 }),
            }
        }
        Op::Raw(seq) => {
            let _ = s.append_event(SessionEvent {
                seq,
                ts_ms: clock.now_ms(),
                body: EventBody::SubTaskStarted {
                    subtask: s.subtasks().len() as u32 + 1,
                    text: "raw".into(),
                    followup_of: None,
                },
            });
            return;
        }
    };
    let _ = s.record(clock, body);
}

proptest! {
    #[test]
    fn state_invariants_hold_after_every_operation(ops in proptest::collection::vec(op(), 1..60)) {
        let clock = ManualClock::new(0, 3);
        let mut s = session();
        for op in ops {
            apply(&mut s, &clock, op);
            let open = s.subtasks().iter().filter(|t| t.status == SubTaskStatus::InProgress).count();
            prop_assert!(open <= 1);
            for (i, t) in s.subtasks().iter().enumerate() {
                prop_assert_eq!(t.id as usize, i + 1);
                if t.status == SubTaskStatus::Completed && t.kind == SubTaskKind::Code {
                    prop_assert!(t.code().is_some_and(|c| c.lint_passed()));
                }
            }
            for (i, e) in s.events().iter().enumerate() {
                prop_assert_eq!(e.seq as usize, i + 1);
                if i > 0 {
                    prop_assert!(e.ts_ms >= s.events()[i - 1].ts_ms);
                }
            }
        }
        let replayed = Session::replay(s.header(), s.events().to_vec()).unwrap();
        prop_assert_eq!(replayed, s);
    }
}

//! Lint and execution against the real toolchain (pyflakes, python3).

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use tutorloop_core::clock::SystemClock;
use tutorloop_core::verifier::{
    parse_lint_output, LintVerdict, RunVerdict, Verifier, VerifierConfig, VerifyError,
};

fn verifier() -> Verifier {
    Verifier::default()
}

fn verifier_with(config: VerifierConfig) -> Verifier {
    Verifier::new(config, Arc::new(SystemClock))
}

#[test]
fn clean_program_passes_lint() {
    let v = verifier();
    let ws = v.write_workspace("x = 1\n").unwrap();
    let r = v.lint(&ws).unwrap();
    assert_eq!(r.verdict(), LintVerdict::Pass);
    assert!(r.messages().is_empty());
    assert_eq!(r.tool_exit(), 0);
}

#[test]
fn undefined_name_fails_lint_at_line_one() {
    let v = verifier();
    let ws = v.write_workspace("print(y)\n").unwrap();
    let r = v.lint(&ws).unwrap();
    assert_eq!(r.verdict(), LintVerdict::Fail);
    assert_eq!(r.messages().len(), 1);
    let m = &r.messages()[0];
    assert_eq!((m.line, m.rule.as_str()), (1, "F821"));
    assert!(m.text.contains("undefined name 'y'"));
    assert_eq!(m.file, "main.py");
}

#[test]
fn syntax_errors_are_reported_as_messages() {
    let v = verifier();
    let ws = v.write_workspace("def f(:\n    pass\n").unwrap();
    let r = v.lint(&ws).unwrap();
    assert_eq!(r.verdict(), LintVerdict::Fail);
    assert_eq!(r.messages()[0].rule, "E999");
}

#[test]
fn missing_lint_tool_is_reported() {
    let v = verifier_with(VerifierConfig {
        lint_cmd: "no-such-linter-tutorloop {file}".into(),
        ..VerifierConfig::default()
    });
    let ws = v.write_workspace("x = 1\n").unwrap();
    assert!(matches!(v.lint(&ws), Err(VerifyError::ToolNotFound(_))));
}

#[test]
fn crashing_lint_tool_is_not_a_pass() {
    let v = verifier_with(VerifierConfig {
        lint_cmd: "python3 -c raise(SystemExit(3)) {file}".into(),
        ..VerifierConfig::default()
    });
    let ws = v.write_workspace("x = 1\n").unwrap();
    assert!(matches!(v.lint(&ws), Err(VerifyError::ToolCrash { .. })));
}

#[test]
fn parse_grammar_examples() {
    let p = parse_lint_output("t.py:3:5: F821 undefined name 'x'");
    let m = &p.messages[0];
    assert_eq!((m.line, m.column, m.rule.as_str()), (3, 5, "F821"));
    assert_eq!(m.text, "undefined name 'x'");
    let p = parse_lint_output("t.py:7: E999 SyntaxError");
    assert_eq!(
        (
            p.messages[0].line,
            p.messages[0].column,
            p.messages[0].rule.as_str()
        ),
        (7, 1, "E999")
    );
    let p = parse_lint_output("random noise");
    assert!(p.messages.is_empty());
    assert_eq!(p.unmatched, 1);
}

#[test]
fn workspace_holds_exact_bytes_and_is_fresh() {
    let v = verifier();
    let code = "a = 1\nb = 'ü'\nprint(a, b)\n";
    let w1 = v.write_workspace(code).unwrap();
    let w2 = v.write_workspace(code).unwrap();
    assert_eq!(std::fs::read(w1.entry_file()).unwrap(), code.as_bytes());
    assert_ne!(w1.root(), w2.root());
    assert!(w1.entry_file().starts_with(w1.root()));
    let root = w1.root().to_path_buf();
    drop(w1);
    assert!(!root.exists());
}

#[test]
fn unwritable_parent_is_an_io_failure() {
    let v = verifier_with(VerifierConfig {
        workspace_parent: Some("/proc/tutorloop-nowhere".into()),
        ..VerifierConfig::default()
    });
    assert!(matches!(
        v.write_workspace("x = 1\n"),
        Err(VerifyError::Io(_))
    ));
}

#[test]
fn successful_run_captures_stdout() {
    let v = verifier();
    let ws = v.write_workspace("print(42)\n").unwrap();
    let r = v.run(&ws).unwrap();
    assert_eq!(r.verdict, RunVerdict::Ok);
    assert_eq!(r.stdout, "42\n");
    assert!(r.err_summary.is_none());
}

#[test]
fn division_by_zero_is_summarized() {
    let v = verifier();
    let ws = v.write_workspace("x = 0\nprint(1 / x)\n").unwrap();
    let r = v.run(&ws).unwrap();
    assert_eq!(r.verdict, RunVerdict::RuntimeError);
    assert!(r
        .err_summary
        .as_deref()
        .unwrap()
        .contains("ZeroDivisionError"));
}

#[test]
fn infinite_loop_hits_the_wall_limit() {
    let v = verifier_with(VerifierConfig {
        wall_secs: 2.0,
        ..VerifierConfig::default()
    });
    let ws = v.write_workspace("while True:\n    pass\n").unwrap();
    let r = v.run(&ws).unwrap();
    assert_eq!(r.verdict, RunVerdict::Timeout);
    assert!(r.duration_secs >= 2.0, "{}", r.duration_secs);
    assert!(r.duration_secs < 10.0);
}

#[test]
fn output_is_capped_and_flagged() {
    let v = verifier_with(VerifierConfig {
        output_bytes: 1000,
        ..VerifierConfig::default()
    });
    let ws = v
        .write_workspace("import sys\nfor _ in range(100000):\n    sys.stdout.write('x' * 100)\n")
        .unwrap();
    let r = v.run(&ws).unwrap();
    assert!(r.stdout.len() <= 1000);
    assert!(r.stdout_truncated);
    assert_eq!(r.verdict, RunVerdict::ResourceLimit);
}

#[test]
fn memory_limit_stops_large_allocations() {
    let v = verifier_with(VerifierConfig {
        memory_bytes: 256 * 1024 * 1024,
        ..VerifierConfig::default()
    });
    let ws = v
        .write_workspace("x = bytearray(2 * 1024 * 1024 * 1024)\nprint(len(x))\n")
        .unwrap();
    let r = v.run(&ws).unwrap();
    assert_eq!(r.verdict, RunVerdict::ResourceLimit);
}

#[test]
fn concurrent_verifications_do_not_share_files() {
    let handles: Vec<_> = (0..8)
        .map(|i| {
            thread::spawn(move || {
                let v = verifier();
                let code = format!(
                    "import os\nopen('sentinel', 'w').write('{i}')\nprint(sorted(os.listdir('.')), open('sentinel').read())\n"
                );
                let ws = v.write_workspace(&code).unwrap();
                let r = v.run(&ws).unwrap();
                thread::sleep(Duration::from_millis(10));
                (ws.root().to_path_buf(), r.stdout)
            })
        })
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    let mut roots: Vec<_> = results.iter().map(|(r, _)| r.clone()).collect();
    roots.sort();
    roots.dedup();
    assert_eq!(roots.len(), 8);
    for (i, (_, out)) in results.iter().enumerate() {
        assert_eq!(out.trim(), format!("['main.py', 'sentinel'] {i}"));
    }
}

#[test]
fn empty_code_is_rejected() {
    assert!(matches!(
        verifier().write_workspace("  \n"),
        Err(VerifyError::EmptyCode)
    ));
}

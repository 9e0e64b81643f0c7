use std::process::{Command, Output};

fn tutorloop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tutorloop"))
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn usage_errors_exit_2() {
    let out = tutorloop(&["ask"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    assert_eq!(tutorloop(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(tutorloop(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_1() {
    let out = tutorloop(&["train-classifier", "--corpus", "does/not/exist.tsv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let out = tutorloop(&[
        "ask",
        "--backend",
        "scripted",
        "--script",
        "fixtures/missing",
        "what",
        "is",
        "a",
        "heap",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ask_answers_with_scripted_backend() {
    let out = tutorloop(&[
        "ask",
        "--backend",
        "scripted",
        "--script",
        "fixtures/all_clean",
        "--virtual-clock",
        "Implement",
        "a",
        "sum",
        "function",
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("(completed)"), "{stdout}");
    assert!(stdout.contains("lint: pass"), "{stdout}");
}

#[test]
fn unresolvable_goals_are_counted_incomplete() {
    let out = tutorloop(&[
        "bench",
        "--backend",
        "scripted",
        "--script",
        "fixtures/unresolvable_ml",
        "--virtual-clock",
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout.contains("77/79 subtasks completed"), "{stdout}");
}

#[test]
fn json_report_on_stdout() {
    let out = tutorloop(&[
        "bench",
        "--backend",
        "scripted",
        "--script",
        "fixtures/all_clean",
        "--virtual-clock",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).expect("valid json");
    assert_eq!(v["total_completed"], 79);
}

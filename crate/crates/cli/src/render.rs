use std::io::{self, Write};

use tutorloop_core::session::{Answer, SubTask, SubTaskStatus};
use tutorloop_core::verifier::RunVerdict;

fn status_label(s: SubTaskStatus) -> &'static str {
    match s {
        SubTaskStatus::Pending => "pending",
        SubTaskStatus::InProgress => "in progress",
        SubTaskStatus::Completed => "completed",
        SubTaskStatus::Failed => "failed",
        SubTaskStatus::TimedOut => "timed out",
    }
}

/// Prints a subtask and its answer. Lint messages are numbered from 1 so a
/// user can pick one by number.
pub fn subtask(out: &mut impl Write, t: &SubTask) -> io::Result<()> {
    writeln!(out, "[{}] {} ({})", t.id, t.text, status_label(t.status))?;
    match &t.answer {
        None => {}
        Some(Answer::Concept(c)) => {
            writeln!(out, "\n{}\n", c.explanation)?;
            if !c.keywords.is_empty() {
                writeln!(out, "Keywords:")?;
                for k in &c.keywords {
                    match &k.definition {
                        Some(d) => writeln!(out, "  - {}: {d}", k.surface)?,
                        None => writeln!(out, "  - {}", k.surface)?,
                    }
                }
            }
            related(out, &c.related)?;
        }
        Some(Answer::Code(c)) => {
            writeln!(
                out,
                "\n--- code (revision {}) ---\n{}",
                c.revision,
                c.code.trim_end()
            )?;
            writeln!(out, "---")?;
            if let Some(lint) = &c.lint {
                if lint.passed() {
                    writeln!(out, "lint: pass")?;
                } else {
                    writeln!(out, "lint: fail")?;
                    for (i, m) in lint.messages().iter().enumerate() {
                        writeln!(
                            out,
                            "  [{}] line {}:{} {} {}",
                            i + 1,
                            m.line,
                            m.column,
                            m.rule,
                            m.text
                        )?;
                    }
                }
            }
            if let Some(run) = &c.run {
                let verdict = match run.verdict {
                    RunVerdict::Ok => "ok",
                    RunVerdict::RuntimeError => "runtime error",
                    RunVerdict::Timeout => "timeout",
                    RunVerdict::ResourceLimit => "resource limit",
                };
                writeln!(out, "run: {verdict}")?;
                if !run.stdout.trim().is_empty() {
                    writeln!(out, "{}", run.stdout.trim_end())?;
                }
                if let Some(err) = &run.err_summary {
                    writeln!(out, "error: {err}")?;
                }
            }
            related(out, &c.related)?;
        }
    }
    if let Some(reason) = &t.reason {
        writeln!(out, "reason: {reason}")?;
    }
    Ok(())
}

fn related(out: &mut impl Write, pairs: &[tutorloop_core::session::RelatedQa]) -> io::Result<()> {
    if pairs.is_empty() {
        return Ok(());
    }
    writeln!(out, "\nRelated:")?;
    for p in pairs {
        writeln!(out, "  Q: {}\n  A: {}", p.question, p.answer)?;
    }
    Ok(())
}

use std::io::{self, BufRead, Write};
use std::path::Path;

use anyhow::{anyhow, Result};
use tutorloop_core::bench::{bundled_suite, HumanJudge, ScenarioSpec};
use tutorloop_core::config::EngineConfig;
use tutorloop_core::orchestrator::{Engine, EngineError, RepairRequest};
use tutorloop_core::prompt::RuntimeMode;
use tutorloop_core::session::{save_transcript, Session, SubTaskKind};

use crate::render;
use crate::setup::Settings;

const HELP: &str = "\
Type a question to ask it. Later questions build on earlier answers.
  <n>              fix lint message number n of the current code
  :fix <error>     ask how to fix a runtime error
  :request <text>  ask for a change to the current code
  :accept          accept the current answer
  :reject [why]    give up on the current answer
  :define <term>   define a keyword of the latest explanation
  :new <question>  ask without building on earlier answers
  :chain <task>    extend the last accepted code
  :goal <n>        ask goal n of the scenario
  :save <path>     write the session transcript
  :help            show this help
  :quit            leave";

enum Input {
    Quit,
    Help,
    Lint(usize),
    Runtime(RuntimeMode, String),
    Accept,
    Reject(String),
    Define(String),
    Ask {
        question: String,
        standalone: bool,
        chain: bool,
    },
    Goal(usize),
    Save(String),
}

fn parse(line: &str) -> Result<Input, String> {
    let line = line.trim();
    if let Ok(n) = line.parse::<usize>() {
        return Ok(Input::Lint(n));
    }
    let Some(cmd) = line.strip_prefix(':') else {
        return Ok(Input::Ask {
            question: line.to_string(),
            standalone: false,
            chain: false,
        });
    };
    let (name, rest) = cmd.split_once(char::is_whitespace).unwrap_or((cmd, ""));
    let rest = rest.trim().to_string();
    let need = |what: &str| {
        if rest.is_empty() {
            Err(format!(":{name} needs {what}"))
        } else {
            Ok(rest.clone())
        }
    };
    Ok(match name {
        "q" | "quit" | "exit" => Input::Quit,
        "h" | "help" => Input::Help,
        "fix" => Input::Runtime(RuntimeMode::Fix, need("an error")?),
        "request" => Input::Runtime(RuntimeMode::Request, need("a request")?),
        "accept" => Input::Accept,
        "reject" => Input::Reject(if rest.is_empty() {
            "rejected by the user".into()
        } else {
            rest
        }),
        "define" => Input::Define(need("a keyword")?),
        "new" => Input::Ask {
            question: need("a question")?,
            standalone: true,
            chain: false,
        },
        "chain" => Input::Ask {
            question: need("a task")?,
            standalone: false,
            chain: true,
        },
        "goal" => Input::Goal(
            need("a goal number")?
                .parse()
                .map_err(|_| "goal number expected".to_string())?,
        ),
        "save" => Input::Save(need("a path")?),
        _ => return Err(format!("unknown command :{name}; try :help")),
    })
}

struct Repl<'a> {
    engine: &'a Engine,
    session: Session,
    scenario: Option<ScenarioSpec>,
}

impl Repl<'_> {
    fn ask(&mut self, question: &str, standalone: bool, chain: bool) -> Result<(), EngineError> {
        if standalone || self.session.subtasks().is_empty() {
            self.engine.handle_subtask(&mut self.session, question)?;
        } else {
            self.engine
                .followup_buildup(&mut self.session, question, chain)?;
        }
        Ok(())
    }

    fn define(&mut self, surface: &str) -> Result<(), EngineError> {
        let owner = self
            .session
            .subtasks()
            .iter()
            .rev()
            .filter(|t| t.kind == SubTaskKind::Concept)
            .find(|t| t.concept().is_some_and(|c| c.keyword(surface).is_some()))
            .map(|t| t.id)
            .ok_or_else(|| EngineError::UnknownKeyword(surface.to_string()))?;
        let k = self
            .engine
            .define_keyword(&mut self.session, owner, surface)?;
        println!("{}: {}", k.surface, k.definition.unwrap_or_default());
        Ok(())
    }

    /// Runs one command; returns false when the session should end.
    fn step(&mut self, input: Input) -> Result<bool> {
        let result = match input {
            Input::Quit => return Ok(false),
            Input::Help => {
                println!("{HELP}");
                return Ok(true);
            }
            Input::Save(path) => {
                save_transcript(Path::new(&path), self.session.events())?;
                println!("transcript written to {path}");
                return Ok(true);
            }
            Input::Define(surface) => {
                if let Err(e) = self.define(&surface) {
                    println!("error: {e}");
                }
                return Ok(true);
            }
            Input::Lint(n) => {
                let message = self
                    .session
                    .in_progress()
                    .and_then(|t| t.code())
                    .and_then(|c| c.lint.as_ref())
                    .and_then(|l| n.checked_sub(1).and_then(|i| l.messages().get(i)).cloned());
                match message {
                    Some(m) => self
                        .engine
                        .repair(&mut self.session, RepairRequest::Lint(Some(m)))
                        .map(drop),
                    None => {
                        println!("no lint message {n}");
                        return Ok(true);
                    }
                }
            }
            Input::Runtime(mode, text) => self
                .engine
                .repair(&mut self.session, RepairRequest::Runtime { mode, text })
                .map(drop),
            Input::Accept => self.engine.accept(&mut self.session).map(drop),
            Input::Reject(reason) => self.engine.reject(&mut self.session, &reason).map(drop),
            Input::Ask {
                question,
                standalone,
                chain,
            } => self.ask(&question, standalone, chain),
            Input::Goal(n) => {
                let goal = self
                    .scenario
                    .as_ref()
                    .and_then(|s| n.checked_sub(1).and_then(|i| s.goals.get(i)).cloned());
                match goal {
                    Some(goal) => {
                        println!("> {goal}");
                        self.ask(&goal, false, false)
                    }
                    None => {
                        println!("no goal {n}");
                        return Ok(true);
                    }
                }
            }
        };
        if let Err(e) = result {
            println!("error: {e}");
        }
        if let Some(t) = self.session.last_subtask() {
            render::subtask(&mut io::stdout().lock(), t)?;
        }
        Ok(true)
    }
}

pub fn run(settings: &Settings, scenario: Option<&str>, transcript: Option<&Path>) -> Result<()> {
    let scenario = match scenario {
        None => None,
        Some(id) => Some(
            bundled_suite()
                .into_iter()
                .find(|s| s.id == id)
                .ok_or_else(|| anyhow!("unknown scenario {id:?}"))?,
        ),
    };
    let engine = settings.engine()?;
    let config = EngineConfig {
        auto_accept_on_pass: false,
        auto_lint_repair: false,
        ..settings.engine.clone()
    };
    let session = Session::new(scenario.clone(), config)?;
    if let Some(s) = &scenario {
        println!("{}\n{}\n", s.title, s.detail);
        for (i, g) in s.goals.iter().enumerate() {
            println!("  goal {}: {g}", i + 1);
        }
        println!();
    }
    println!("{HELP}");
    let mut repl = Repl {
        engine: &engine,
        session,
        scenario,
    };
    let stdin = io::stdin();
    let mut lines = stdin.lock().lines();
    loop {
        print!("> ");
        io::stdout().flush()?;
        let Some(line) = lines.next().transpose()? else {
            println!();
            break;
        };
        if line.trim().is_empty() {
            continue;
        }
        match parse(&line) {
            Ok(input) => {
                if !repl.step(input)? {
                    break;
                }
            }
            Err(msg) => println!("{msg}"),
        }
    }
    if let Some(path) = transcript {
        save_transcript(path, repl.session.events())?;
    }
    Ok(())
}

/// Asks on the terminal whether each verified answer solves its goal.
pub struct TerminalJudge;

impl HumanJudge for TerminalJudge {
    fn accept(&mut self, scenario: &ScenarioSpec, goal_index: usize, session: &Session) -> bool {
        let mut out = io::stdout().lock();
        let _ = writeln!(out, "\n== {} goal {goal_index}", scenario.id);
        if let Some(t) = session.last_subtask() {
            let _ = render::subtask(&mut out, t);
        }
        let _ = write!(out, "accept? [y/N] ");
        let _ = out.flush();
        drop(out);
        let mut line = String::new();
        if io::stdin().read_line(&mut line).is_err() {
            return false;
        }
        matches!(line.trim(), "y" | "Y" | "yes")
    }
}

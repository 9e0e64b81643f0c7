mod interactive;
mod render;
mod setup;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tutorloop_classifier::{
    load_corpus, parse_corpus, save_model, train, TrainConfig, BUNDLED_CORPUS,
};
use tutorloop_core::bench::{
    aggregate, bundled_suite, emit_report, load_suite, run_benchmark, write_report, Judge,
    ReportFormat,
};
use tutorloop_core::gateway::BackendKind;
use tutorloop_core::session::{Session, SubTaskStatus};

use crate::setup::Settings;

#[derive(Debug, Parser)]
#[command(name = "tutorloop", version, about = "Prompt-driven programming tutor")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Remote,
    Scripted,
}

impl From<BackendArg> for BackendKind {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Remote => BackendKind::Remote,
            BackendArg::Scripted => BackendKind::Scripted,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Chat backend to use.
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,
    /// Base URL of the chat-completions endpoint.
    #[arg(long, global = true)]
    base_url: Option<String>,
    #[arg(long, global = true)]
    model: Option<String>,
    /// Reply script for the scripted backend (".json" may be left off).
    #[arg(long, global = true)]
    script: Option<PathBuf>,
    /// Lint and runtime repair budget per subtask.
    #[arg(long, global = true)]
    max_repair_iters: Option<u32>,
    /// TOML file with [engine], [backend] and [verifier] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Router model to use instead of the built-in one.
    #[arg(long, global = true)]
    classifier: Option<PathBuf>,
    /// Measure time on a virtual clock so scripted runs are reproducible.
    #[arg(long, global = true)]
    virtual_clock: bool,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum JudgeArg {
    Auto,
    Interactive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Answer one question and exit.
    Ask { question: Vec<String> },
    /// Interactive tutoring session.
    Session {
        /// Bundled scenario whose goals are offered as questions.
        #[arg(long)]
        scenario: Option<String>,
        /// Write the session transcript here on exit.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Train the question router.
    TrainClassifier {
        /// Labeled corpus file, or "bundled".
        #[arg(long)]
        corpus: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
        /// Where to write the trained model.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the benchmark suite.
    Bench {
        /// Directory of scenario files, or "bundled".
        #[arg(long, default_value = "bundled")]
        suite: String,
        #[arg(long)]
        timeout_secs: Option<f64>,
        #[arg(long, value_enum, default_value_t = JudgeArg::Auto)]
        judge: JudgeArg,
        /// Write the structured report here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Format of the report printed to stdout.
        #[arg(long, value_enum, default_value_t = FormatArg::Text)]
        format: FormatArg,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if cli.global.verbose {
        tracing_subscriber::fmt()
            .with_writer(std::io::stderr)
            .with_env_filter(tracing_subscriber::EnvFilter::new("info"))
            .init();
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn usage(message: &str) -> ExitCode {
    use clap::CommandFactory;
    eprintln!("error: {message}\n");
    let _ = Cli::command().write_help(&mut std::io::stderr());
    ExitCode::from(2)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Ask { question } => {
            let question = question.join(" ");
            if question.trim().is_empty() {
                return Ok(usage("ask needs a question"));
            }
            ask(&cli.global, &question)
        }
        Command::Session {
            scenario,
            transcript,
        } => {
            let settings = Settings::load(&cli.global)?;
            interactive::run(&settings, scenario.as_deref(), transcript.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::TrainClassifier {
            corpus,
            seed,
            epochs,
            out,
        } => train_classifier(&corpus, seed, epochs, out),
        Command::Bench {
            suite,
            timeout_secs,
            judge,
            report,
            format,
        } => bench(&cli.global, &suite, timeout_secs, judge, report, format),
        Command::Serve { bind } => serve(&cli.global, &bind),
    }
}

fn ask(global: &GlobalArgs, question: &str) -> Result<ExitCode> {
    let settings = Settings::load(global)?;
    let engine = settings.engine()?;
    let config = tutorloop_core::config::EngineConfig {
        auto_accept_on_pass: true,
        auto_lint_repair: true,
        ..settings.engine.clone()
    };
    let mut session = Session::new(None, config)?;
    let id = engine.handle_subtask(&mut session, question)?;
    let t = session.subtask(id)?;
    let mut out = std::io::stdout().lock();
    render::subtask(&mut out, t)?;
    out.flush()?;
    Ok(if t.status == SubTaskStatus::Completed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn train_classifier(
    corpus: &str,
    seed: u64,
    epochs: Option<usize>,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    let questions = if corpus == "bundled" {
        parse_corpus(BUNDLED_CORPUS)?
    } else {
        load_corpus(corpus).with_context(|| format!("cannot load corpus {corpus}"))?
    };
    let mut config = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    if let Some(n) = epochs {
        config.epochs = n;
    }
    let (model, report) = train(&questions, &config)?;
    println!(
        "train {} / held out {}",
        report.train_size, report.heldout_size
    );
    for e in &report.epochs {
        let acc = e
            .heldout_accuracy
            .map_or_else(|| "-".to_string(), |a| format!("{a:.4}"));
        println!(
            "epoch {:>3}  loss {:.5}  held-out accuracy {acc}",
            e.epoch, e.train_loss
        );
    }
    if let Some(path) = out {
        save_model(&model, &path).with_context(|| format!("cannot write {}", path.display()))?;
        println!("model written to {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn bench(
    global: &GlobalArgs,
    suite: &str,
    timeout_secs: Option<f64>,
    judge: JudgeArg,
    report_path: Option<PathBuf>,
    format: FormatArg,
) -> Result<ExitCode> {
    let mut settings = Settings::load(global)?;
    if let Some(t) = timeout_secs {
        settings.engine.subtask_timeout_secs = t;
    }
    settings.engine.validate()?;
    let scenarios = if suite == "bundled" {
        bundled_suite()
    } else {
        load_suite(std::path::Path::new(suite))?
    };
    if scenarios.is_empty() {
        bail!("suite {suite} has no scenarios");
    }
    let engine = settings.engine()?;
    let mut human = interactive::TerminalJudge;
    let judge = match judge {
        JudgeArg::Auto => Judge::AutoAcceptOnPass,
        JudgeArg::Interactive => Judge::Interactive(&mut human),
    };
    let result = run_benchmark(&scenarios, &engine, &settings.engine, judge)?;
    let report = aggregate(&result)?;
    if let Some(path) = report_path {
        write_report(&path, &emit_report(&report, ReportFormat::StructuredData)?)?;
    }
    let shown = match format {
        FormatArg::Text => ReportFormat::TextTable,
        FormatArg::Json => ReportFormat::StructuredData,
    };
    print!("{}", emit_report(&report, shown)?);
    Ok(ExitCode::SUCCESS)
}

fn serve(global: &GlobalArgs, bind: &str) -> Result<ExitCode> {
    let settings = Settings::load(global)?;
    let engine = Arc::new(settings.engine()?);
    let defaults = tutorloop_core::config::EngineConfig {
        auto_accept_on_pass: false,
        auto_lint_repair: false,
        ..settings.engine.clone()
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tutorloop_server::bind(bind).await?;
        let handle = tutorloop_server::start(listener, engine, defaults)?;
        eprintln!("listening on http://{}", handle.local_addr());
        tokio::signal::ctrl_c().await?;
        eprintln!("shutting down");
        handle.shutdown().await?;
        Ok(ExitCode::SUCCESS)
    })
}

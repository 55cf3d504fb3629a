mod commands;
mod settings;

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use settings::{GlobalArgs, Settings};

#[derive(Debug, Parser)]
#[command(name = "hetqa", version, about = "Multi-hop question answering over text and a knowledge base")]
#[command(subcommand_required = true, arg_required_else_help = true)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and validate the knowledge base.
    Ingest,
    /// Build the retrieval indexes the run configuration needs.
    Index {
        /// Also write the linearized knowledge base passages here.
        #[arg(long)]
        dump_kb: Option<PathBuf>,
    },
    /// Answer one question and save its trace.
    Ask {
        #[arg(long, short = 'q')]
        question: String,
        #[arg(long, default_value = "hetqa-trace.json")]
        trace: PathBuf,
    },
    /// Answer a benchmark and write an evaluation report.
    Eval {
        /// Benchmark file; falls back to data.benchmark.
        #[arg(long)]
        benchmark: Option<PathBuf>,
        #[arg(long, default_value = "hetqa-eval")]
        out: PathBuf,
        /// Questions answered concurrently.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Dataset construction stages.
    Datagen {
        #[command(subcommand)]
        stage: commands::DatagenStage,
    },
    /// Entity-linking diagnostics for a set of saved traces.
    DiagnoseSparql {
        /// Line-delimited traces, as written by `eval`.
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        benchmark: Option<PathBuf>,
    },
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let settings = Settings::resolve(&cli.global)?;
    tracing::debug!(mode = ?settings.run.mode, seed = settings.seed(), "settings resolved");
    match cli.command {
        Command::Ingest => commands::ingest(&settings),
        Command::Index { dump_kb } => commands::index(&settings, dump_kb.as_deref()),
        Command::Ask { question, trace } => commands::ask(&settings, &question, &trace),
        Command::Eval {
            benchmark,
            out,
            parallel,
        } => commands::eval(&settings, benchmark, &out, parallel),
        Command::Datagen { stage } => commands::datagen(&settings, stage),
        Command::DiagnoseSparql { traces, benchmark } => commands::diagnose_sparql(&settings, &traces, benchmark),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.global.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::from(1)
        }
    }
}

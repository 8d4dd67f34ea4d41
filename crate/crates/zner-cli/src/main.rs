//! `zner` — zero-shot named-entity recognition around hosted LLM endpoints.
//!
//! Four subcommands cover the pipeline: `curate` builds a training set and
//! overlap report from an annotated corpus, `guidelines` generates per-tag
//! definitions and annotation guidelines, `infer` runs per-tag extraction
//! calls, and `eval` scores predictions against gold annotations.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use zner_core::evaluation::ReportLayout;

use commands::{EvalArgs, InferArgs};
use config::RunConfig;
use error::{CliError, ErrorKind};

#[derive(Parser)]
#[command(name = "zner", version, about = "Zero-shot NER pipeline: curate, guidelines, infer, eval")]
struct Cli {
    /// Run configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a curated training set, overlap report and shortfall report.
    Curate {
        /// Annotated corpus (JSONL: id, text, gold).
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Generate definitions and guidelines for tags; resumes from an
    /// existing output file without repeating calls.
    Guidelines {
        #[arg(long)]
        corpus: PathBuf,
        /// Output definitions file (JSONL); existing entries are kept.
        #[arg(long)]
        out: PathBuf,
        /// Restrict to these tags (comma-separated); default: all corpus tags.
        #[arg(long, value_delimiter = ',')]
        tags: Vec<String>,
    },
    /// Run per-tag extraction calls over the corpus.
    Infer {
        #[arg(long)]
        corpus: PathBuf,
        /// Definitions file from `guidelines`; required unless --no-guidelines.
        #[arg(long)]
        dg: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Restrict to these tags (comma-separated); default: all corpus tags.
        #[arg(long, value_delimiter = ',')]
        tags: Vec<String>,
        /// Proceed even when the planned call count exceeds the budget.
        #[arg(long)]
        yes: bool,
        /// Stop after this many calls; rerunning later resumes from cache.
        #[arg(long)]
        max_calls: Option<usize>,
        /// Use the prompt variant without definitions and guidelines.
        #[arg(long)]
        no_guidelines: bool,
        /// Disable the call cache (every call is re-sent).
        #[arg(long)]
        no_resume: bool,
    },
    /// Score prediction runs against gold annotations.
    Eval {
        /// Gold corpus (JSONL: id, text, gold).
        #[arg(long)]
        gold: PathBuf,
        /// One or more prediction files; several files are treated as
        /// repeated runs and aggregated as mean +/- std.
        #[arg(long, required = true, num_args = 1..)]
        predictions: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Exit non-zero if any prediction has failed parse status.
        #[arg(long)]
        strict: bool,
        /// Report layout: "ood" (per-benchmark F1) or "buster" (micro/macro).
        #[arg(long, default_value = "buster")]
        layout: String,
    },
}

fn parse_layout(name: &str) -> Result<ReportLayout, CliError> {
    match name {
        "ood" => Ok(ReportLayout::OodTable),
        "buster" => Ok(ReportLayout::BusterTable),
        other => Err(CliError::new(
            ErrorKind::Config,
            format!("unknown layout {other:?}; expected \"ood\" or \"buster\""),
        )),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Curate { corpus, out_dir } => commands::cmd_curate(&config, &corpus, &out_dir),
        Command::Guidelines { corpus, out, tags } => {
            commands::cmd_guidelines(&config, &corpus, &out, &tags)
        }
        Command::Infer {
            corpus,
            dg,
            out_dir,
            tags,
            yes,
            max_calls,
            no_guidelines,
            no_resume,
        } => commands::cmd_infer(
            &config,
            &InferArgs {
                corpus,
                dg,
                out_dir,
                tags,
                yes,
                max_calls,
                no_guidelines,
                no_resume,
            },
        ),
        Command::Eval {
            gold,
            predictions,
            out_dir,
            strict,
            layout,
        } => commands::cmd_eval(
            &config,
            &EvalArgs {
                gold,
                runs: predictions,
                out_dir,
                strict,
                layout: parse_layout(&layout)?,
            },
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind.exit_code())
        }
    }
}

//! `gramprof`: train, evaluate, profile, index, search and serve.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 internal error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "gramprof", version, about = "Span-based grammatical item profiler")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Training configuration shared by `train` and `cv`.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// Flat `key = value` configuration file; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides one configuration key (repeatable), e.g. `--set lr=1e-3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write its checkpoint directory.
    Train {
        /// Training corpus (JSONL).
        #[arg(long)]
        data: PathBuf,
        /// Validation corpus (JSONL) used for epoch selection.
        #[arg(long)]
        val: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Checkpoint output directory.
        #[arg(long)]
        out: PathBuf,
        /// Train one shared model over all languages in the data, with
        /// language-namespaced tags.
        #[arg(long)]
        multilingual: bool,
        /// Select the level-loss weight from the configured grid
        /// (multitask only).
        #[arg(long, conflicts_with = "multilingual")]
        alpha_search: bool,
    },
    /// k-fold cross validation; writes averaged and per-fold metrics.
    Cv {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[command(flatten)]
        config: ConfigArgs,
        /// JSON report path.
        #[arg(long)]
        report: PathBuf,
    },
    /// Evaluate a checkpoint on a labelled corpus.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// JSON report path; printed to stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Report pooled and per-language metrics.
        #[arg(long)]
        by_language: bool,
    },
    /// Profile raw text.
    Profile {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "input", required_unless_present = "input")]
        text: Option<String>,
        /// Read the text from a file.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Language code; defaults to the model's only language.
        #[arg(long)]
        lang: Option<String>,
        /// Drop spans whose probability is below this value.
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        /// Emit one prediction JSON object per line.
        #[arg(long)]
        json: bool,
    },
    /// Profile documents from a JSONL file (`{"id","text","lang"}` per
    /// line) into an index file.
    Index {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        docs: PathBuf,
        /// Index file; created if missing, extended otherwise.
        #[arg(long)]
        out: PathBuf,
        /// Replace documents whose id is already indexed.
        #[arg(long)]
        overwrite: bool,
    },
    /// Search an index by grammatical item, level and language.
    Search {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        gi: Option<String>,
        #[arg(long)]
        level: Option<String>,
        #[arg(long)]
        lang: Option<String>,
        /// Emit the matching records as JSON lines.
        #[arg(long)]
        json: bool,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "GRAMPROF_MODEL")]
        model: PathBuf,
        #[arg(long, env = "GRAMPROF_INDEX")]
        index: PathBuf,
        #[arg(long, env = "GRAMPROF_PORT", default_value_t = gramprof_server::DEFAULT_PORT)]
        port: u16,
        /// Maximum text size in bytes.
        #[arg(long, env = "GRAMPROF_MAX_BODY", default_value_t = gramprof_server::DEFAULT_MAX_BODY)]
        max_body: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

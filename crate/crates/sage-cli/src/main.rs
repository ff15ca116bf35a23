//! `sage` — train, score and filter with a supervised-autoencoder
//! out-of-distribution companion.
//!
//! Exit codes: 0 success, 2 usage (from argument parsing), 3 config or
//! input parsing, 4 pipeline failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod config;
mod data;
mod eval;
mod score;
mod train;

/// Command failures, partitioned by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration: unknown keys, unparsable or invalid values.
    Config(String),
    /// Bad or missing input files (datasets, artifacts, score files).
    Input(String),
    /// The pipeline itself failed (training, scoring, writing outputs).
    Pipeline(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config: {m}"),
            CliError::Input(m) => write!(f, "input: {m}"),
            CliError::Pipeline(m) => write!(f, "pipeline: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 3,
            CliError::Pipeline(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "sage",
    version,
    about = "OOD scoring and filtering with a supervised-autoencoder companion model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration flags shared by every subcommand. Deliberately declared
/// per-subcommand rather than globally: clap does not merge global
/// repeated flags given on both sides of the subcommand, and silently
/// dropping `--set` overrides would be far worse than requiring them
/// after the subcommand.
#[derive(Args)]
struct Common {
    /// Config file: flat `key = value` lines with [section] headers.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one config key (repeatable), e.g. --set preset=abalone.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<config::RunConfig, CliError> {
        config::load_config(self.config.as_deref(), &self.set)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the resolved configuration; output parses back unchanged.
    PrintConfig(Common),
    /// Show where the datasets come from and which files are expected.
    FetchInfo(Common),
    /// Generate a synthetic stand-in corpus for the active preset.
    SynthData(Common),
    /// Train the companion model; writes its artifact and a loss log.
    Train(Common),
    /// Train the separate downstream model the filter protects.
    TrainDownstream(Common),
    /// Materialize transformed copies of the test split.
    Transform {
        #[command(flatten)]
        common: Common,
        /// One transform name; default runs the whole configured panel.
        #[arg(long)]
        name: Option<String>,
    },
    /// Score inputs with a trained companion; writes one row per sample.
    Score {
        #[command(flatten)]
        common: Common,
        /// Comma-separated tags: train, test, or transform names.
        #[arg(long)]
        tags: Option<String>,
    },
    /// Keep score rows at or above a threshold.
    Filter {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        threshold: f64,
        /// Restrict filtering to one tag.
        #[arg(long)]
        tag: Option<String>,
    },
    /// Retention curves, downstream metrics under filtering, summary JSON.
    Eval(Common),
    /// Retrain at latent widths [2, 8, 16, 32, 64, 128] and tabulate.
    SweepLatent(Common),
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::PrintConfig(c) => {
            print!("{}", c.load()?.print());
            Ok(())
        }
        Command::FetchInfo(c) => data::cmd_fetch_info(&c.load()?),
        Command::SynthData(c) => data::cmd_synth_data(&c.load()?),
        Command::Train(c) => train::cmd_train(&c.load()?),
        Command::TrainDownstream(c) => train::cmd_train_downstream(&c.load()?),
        Command::Transform { common, name } => data::cmd_transform(&common.load()?, name.as_deref()),
        Command::Score { common, tags } => score::cmd_score(&common.load()?, tags.as_deref()),
        Command::Filter { common, threshold, tag } => {
            score::cmd_filter(&common.load()?, *threshold, tag.as_deref())
        }
        Command::Eval(c) => eval::cmd_eval(&c.load()?),
        Command::SweepLatent(c) => train::cmd_sweep_latent(&c.load()?),
    }
}

fn main() {
    // Rust ignores SIGPIPE, which turns `sage ... | head` into a stdout
    // panic; restore the default so early-closed pipes end the process
    // quietly like any other command-line tool.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

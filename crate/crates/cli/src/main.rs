//! `glmkit`: dataset building, plan inspection and export, training and
//! evaluation.

mod config;
mod dataset;
mod inspect;
mod manifest;
mod run;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Config;

#[derive(Debug, Parser)]
#[command(
    name = "glmkit",
    version,
    about = "Graph language models on a relative-position encoder"
)]
struct Cli {
    /// JSON config file; command-line flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build train/dev/test JSONL splits.
    BuildDataset(dataset::Args),
    /// Print the extended Levi graph, relative positions and mask of a graph.
    Inspect(inspect::InspectArgs),
    /// Write the position plan of a graph as JSON or binary.
    ExportPlan(inspect::ExportArgs),
    /// Train heads (and optionally the encoder) on a dataset, once per seed.
    Train(run::TrainArgs),
    /// Score trained runs on a split and report mean ± std over seeds.
    Eval(run::EvalArgs),
}

/// Bad flags, config files or inputs the user has to fix; exits with 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(glmkit::Error::Config(_) | glmkit::Error::UnknownRelation { .. }) = cause.downcast_ref() {
            return 2;
        }
    }
    1
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("GLMKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("GLMKIT_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    let cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    match cli.command {
        Command::BuildDataset(a) => dataset::build(a, cfg, cli.config.as_deref()),
        Command::Inspect(a) => inspect::inspect(a, cfg, cli.config.as_deref()),
        Command::ExportPlan(a) => inspect::export(a, cfg, cli.config.as_deref()),
        Command::Train(a) => run::train(a, cfg, cli.config.as_deref()),
        Command::Eval(a) => run::eval(a, cfg, cli.config.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

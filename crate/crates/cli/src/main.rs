//! Command-line experiments for PPG cognitive-load detection.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing::error;

use crate::commands::Ctx;
use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "cogload", version, about = "PPG cognitive-load detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Repetitions per protocol (overrides the config).
    #[arg(long, global = true)]
    runs: Option<u32>,
    /// Window lengths in seconds, comma separated (overrides the config).
    #[arg(long, global = true, value_delimiter = ',')]
    windows: Option<Vec<u32>>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Log debug output.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train from scratch on the pilot data (leave one subject out).
    Vanilla,
    /// Train the WESAD stress models (cached).
    Pretrain,
    /// Fine-tune the stress models on the pilot data.
    Finetune,
    /// Calibrate models to survey participants and measure burden.
    Survey,
    /// Response-time statistics for the surveys.
    ResponseTimes,
    /// Combine the vanilla and fine-tuned results into one table.
    Report,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(r) = cli.runs {
        cfg.runs = r;
    }
    if let Some(w) = cli.windows {
        cfg.window_lens = w;
    }
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global()?;
    }
    let ctx = Ctx { cfg, out: cli.out };
    match cli.command {
        Command::Vanilla => commands::vanilla(&ctx),
        Command::Pretrain => commands::pretrain(&ctx),
        Command::Finetune => commands::finetune(&ctx),
        Command::Survey => commands::survey(&ctx),
        Command::ResponseTimes => commands::response_times(&ctx),
        Command::Report => commands::report(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(if cli.verbose {
            tracing::Level::DEBUG
        } else {
            tracing::Level::INFO
        })
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}

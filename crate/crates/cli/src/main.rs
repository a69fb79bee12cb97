use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedcast::config::ExperimentConfig;
use fedcast::runner::{self, Stage};
use fedcast::Error;

#[derive(Debug, Parser)]
#[command(
    name = "fedcast",
    version,
    about = "Federated throughput forecasting and live-streaming QoE simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the federation and write round reports and checkpoints.
    Federate(Args),
    /// Write horizon correlations and throughput KDE curves.
    Analyze(Args),
    /// Replay test traces through the streaming simulator.
    Stream(Args),
    /// federate, analyze, then stream.
    All(Args),
}

#[derive(Debug, clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for per-client work.
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, args) = match cli.command {
        Command::Federate(a) => (Stage::Federate, a),
        Command::Analyze(a) => (Stage::Analyze, a),
        Command::Stream(a) => (Stage::Stream, a),
        Command::All(a) => (Stage::All, a),
    };

    let mut cfg = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e @ (Error::Validation(_) | Error::Parse(_) | Error::Io { .. })) => {
            eprintln!("fedcast: invalid config {}: {e}", args.config.display());
            return ExitCode::from(1);
        }
        Err(e) => {
            eprintln!("fedcast: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args.out.unwrap_or_else(|| cfg.output.dir.clone());

    match runner::run(&cfg, stage, &out, args.workers) {
        Ok(()) => {
            eprintln!("fedcast: wrote {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("fedcast: {e}");
            ExitCode::from(2)
        }
    }
}

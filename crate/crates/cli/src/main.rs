//! `altereval`: pool targets, serve judging tasks, simulate dialogs and
//! report results.

mod config;
mod pool;
mod report;
mod simulate;
mod tools;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// An error caused by the invocation or its inputs (exit code 2).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Parser)]
#[command(name = "altereval", version, about = "Evaluate conversational recommenders with alternative relevant items")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by commands driven by a run config.
#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// JSON run config; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config and ALTEREVAL_SEED).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Select a difficulty-stratified target sample and build its judging pools.
    Pool(pool::PoolArgs),
    /// Serve judging tasks over HTTP.
    Serve(tools::ServeArgs),
    /// Consolidate stored annotations into a qrels file.
    Export(tools::ExportArgs),
    /// Run the simulator grid and write transcripts and reports.
    Simulate(simulate::SimulateArgs),
    /// Build the final-turn comparison table from a directory of reports.
    Report(report::ReportArgs),
    /// Cohen's kappa between two annotators.
    Kappa(tools::KappaArgs),
    /// Required number of targets for a correlation effect size.
    Power(tools::PowerArgs),
    /// Collection statistics of a qrels file.
    Stats(tools::StatsArgs),
    /// Generate a seeded synthetic benchmark with a ready-to-use config.
    Synth(tools::SynthArgs),
}

/// Maps an error to the process exit code: 2 for bad input, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() || cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<altereval_core::Error>() {
            return if e.is_input_error() { 2 } else { 1 };
        }
        if let Some(e) = cause.downcast_ref::<altereval_service::ServiceError>() {
            use altereval_service::ServiceError as S;
            return match e {
                S::Core(c) if !c.is_input_error() => 1,
                S::Io { .. } => 1,
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            return if e.kind() == std::io::ErrorKind::NotFound { 2 } else { 1 };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pool(a) => pool::run(a),
        Command::Serve(a) => tools::serve(a),
        Command::Export(a) => tools::export(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Report(a) => report::run(a),
        Command::Kappa(a) => tools::kappa(a),
        Command::Power(a) => tools::power(a),
        Command::Stats(a) => tools::stats(a),
        Command::Synth(a) => tools::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

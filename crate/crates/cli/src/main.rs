mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::UsageError;

/// Generate UTXO transaction streams, place them on shards and simulate
/// cross-shard execution.
#[derive(Parser, Debug)]
#[command(name = "shardplace", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// TOML file with defaults for any flag, plus [workload], [cost] and [drive] tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// The single seed every random choice derives from.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic stream from a preset or a workload spec file.
    Gen(commands::GenArgs),
    /// Dependency statistics of a stream.
    Analyze(commands::AnalyzeArgs),
    /// Place a stream and write the decisions.
    Place(commands::PlaceArgs),
    /// Run the discrete-event simulation.
    Simulate(commands::SimulateArgs),
    /// Cross-shard ratio and imbalance over algorithms × shard counts.
    Compare(commands::CompareArgs),
    /// Partition metrics and dynamic loads for a decisions file.
    Report(commands::ReportArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SHARDPLACE_LOG", "info"))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

//! The `gridcast` command line: synthetic data, training, backtesting,
//! significance tests and random hyperparameter search.

pub mod commands;
pub mod config;
pub mod dataset;
mod error;
pub mod evaluation;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "gridcast",
    version,
    about = "Hierarchical electrical load forecasting"
)]
pub struct Cli {
    /// Worker threads for evaluation and search; 1 guarantees bit-identical reruns.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic substation dataset.
    Synth(commands::synth::SynthArgs),
    /// Train a model on a dataset.
    Train(commands::train::TrainArgs),
    /// Backtest a checkpoint on the test span of a dataset.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Welch t-test and Cohen's d between two evaluation reports.
    Compare(commands::compare::CompareArgs),
    /// Seeded random hyperparameter search.
    Search(commands::search::SearchArgs),
}

/// Flags shared by commands that write a run directory.
#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory (default: runs/<command>-<timestamp>, under GRIDCAST_RUNS_DIR if set).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let arguments: Vec<String> = std::env::args().skip(1).collect();
    let threads = cli.threads.max(1);
    match cli.command {
        Command::Synth(a) => commands::synth::run(a, arguments, threads),
        Command::Train(a) => commands::train::run(a, arguments, threads),
        Command::Evaluate(a) => commands::evaluate::run(a, arguments, threads),
        Command::Compare(a) => commands::compare::run(a, arguments, threads),
        Command::Search(a) => commands::search::run(a, arguments, threads),
    }
}

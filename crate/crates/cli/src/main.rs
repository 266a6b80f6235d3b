use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod args;
mod commands;
mod error;
mod run;

use error::CliError;

/// Network-level travel-time forecasting with hierarchical attention LSTMs.
#[derive(Debug, Parser)]
#[command(name = "hierlstm", version)]
struct Cli {
    /// Output directory. Defaults to `$HIERLSTM_OUT/<command>`, or
    /// `./hierlstm-out/<command>` when the variable is unset.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Autocorrelation, stationarity tests, and seasonal profiles.
    Analyze(commands::analyze::AnalyzeArgs),
    /// Generate a synthetic travel-time corpus.
    Synth(commands::synth::SynthArgs),
    /// Train one model and write a checkpoint.
    Train(commands::train::TrainArgs),
    /// Score a checkpoint on its train, validation, and test splits.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Train and score every variant at every horizon under shared seeds.
    Compare(commands::compare::CompareArgs),
    /// Write a prediction trace for plotting.
    Predict(commands::predict::PredictArgs),
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Analyze(a) => commands::analyze::run(a, out),
        Command::Synth(a) => commands::synth::run(a, out),
        Command::Train(a) => commands::train::run(a, out),
        Command::Evaluate(a) => commands::evaluate::run(a, out),
        Command::Compare(a) => commands::compare::run(a, out),
        Command::Predict(a) => commands::predict::run(a, out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

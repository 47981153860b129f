//! Command-line interface: dataset preparation, training, prediction,
//! evaluation, kernel benchmarking, and the numerical self-check battery.
//!
//! Exit codes: 0 success, 1 usage or configuration problem, 2 data problem
//! (missing or malformed files), 3 numerical failure.

mod commands;
mod config;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use crbm_bp::Error;

#[derive(Parser)]
#[command(
    name = "crbm-bp",
    version,
    about = "Belief propagation, training, and structured prediction on conditional Boltzmann machines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a structured-prediction dataset: binarize, corrupt, split.
    MakeDataset(commands::make_dataset::Args),
    /// Train a model and write a checkpoint, sidecar, and history.
    Train(commands::train::Args),
    /// Decode corrupted observations into predicted images.
    Predict(commands::predict::Args),
    /// Score a model or a prediction file against clean targets.
    Eval(commands::eval::Args),
    /// Time the message-passing kernels over a size grid.
    BenchBp(commands::bench::Args),
    /// Run the numerical self-check battery.
    OracleCheck(commands::oracle::Args),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            // Help/version go to stdout, usage problems to stderr.
            let _ = err.print();
            std::process::exit(code);
        }
    };

    let result = match cli.command {
        Command::MakeDataset(args) => commands::make_dataset::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Predict(args) => commands::predict::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::BenchBp(args) => commands::bench::run(args),
        Command::OracleCheck(args) => commands::oracle::run(args),
    };

    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}

/// Maps library errors onto the documented exit codes.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        Error::Parse { .. }
        | Error::Io(_)
        | Error::DimensionMismatch(_)
        | Error::InvalidValue(_)
        | Error::ModelTooLarge { .. } => 2,
        Error::Numerical { .. } | Error::TrainingAborted { .. } => 3,
    }
}

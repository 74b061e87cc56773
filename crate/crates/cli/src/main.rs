//! `rbbm` command-line front end.

mod commands;
mod failure;
mod provenance;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "rbbm", version, about = "Bayesian beam models for range finders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample synthetic (z, z*) data from the generative beam network.
    Simulate(commands::simulate::Args),
    /// Fit model parameters to a dataset.
    Learn(commands::learn::Args),
    /// Check the closed-form model against its numeric and Monte Carlo oracles.
    Validate(commands::validate::Args),
    /// Probability map and beam marginals of the sample-based scan model.
    Scanmap(commands::scanmap::Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate::run(args),
        Command::Learn(args) => commands::learn::run(args),
        Command::Validate(args) => commands::validate::run(args),
        Command::Scanmap(args) => commands::scanmap::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

mod commands;
mod expr;
mod specfile;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Common;

/// Asymptotic expansions of fundamental matrices of `Y' = (λA + B)Y`.
#[derive(Debug, Parser)]
#[command(name = "fundasym", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write R_m.csv for every order and manifest.json.
    Expand(Common),
    /// Measure the remainder along the λ ray; writes rate_report.csv.
    Verify(Common),
    /// Remainder integrals and operator-norm probes; writes estimates.csv.
    Neumann(Common),
    /// Zeros of the characteristic determinant in a rectangle; writes eigen.json.
    Eigen(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Expand(a) => commands::expand(a),
        Command::Verify(a) => commands::verify(a),
        Command::Neumann(a) => commands::neumann(a),
        Command::Eigen(a) => commands::eigen(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

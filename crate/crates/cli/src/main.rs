//! `circlepack` command-line tool.
//!
//! Exit codes: 0 converged or valid, 1 input error, 2 diverged, step limit
//! or inadmissible, 3 internal invariant violation.

mod commands;
mod config;
mod error;
mod report;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Flags;

#[derive(Parser)]
#[command(
    name = "circlepack",
    version,
    about = "Circle packing metrics by combinatorial curvature flows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a mesh and print its counts and degree histogram.
    Validate(Flags),
    /// Curvature, Calabi energy and Gauss-Bonnet residual of a metric.
    Curvature(Flags),
    /// Integrate a flow; writes trace.csv and final.json.
    Flow(Flags),
    /// Decide admissibility of a target curvature (default K_av).
    Check(Flags),
    /// Sample the Ricci potential along rays from the constant-curvature metric.
    PotentialProbe(Flags),
}

type Runner = fn(&config::RunConfig) -> Result<i32, error::CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are input errors; exit 2 is reserved
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (flags, run): (&Flags, Runner) = match &cli.command {
        Command::Validate(f) => (f, commands::validate),
        Command::Curvature(f) => (f, commands::curvature),
        Command::Flow(f) => (f, commands::flow),
        Command::Check(f) => (f, commands::check),
        Command::PotentialProbe(f) => (f, commands::potential_probe),
    };
    let result = flags.resolve().and_then(|cfg| run(&cfg));
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! Command-line entry point.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stein_hmm_cli::{compare, config, runner};

#[derive(Parser)]
#[command(name = "stein-hmm", version, about = "Seeded experiment runner for hidden-Markov functional simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run { config: PathBuf },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
    /// Compare a clt run against a stein-bound run (results CSV paths).
    Compare { run_a: PathBuf, run_b: PathBuf },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config } => {
            let resolved = match config::resolve(&config) {
                Ok(resolved) => resolved,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(2);
                }
            };
            match runner::run(&resolved) {
                Ok(artifacts) => {
                    println!("results: {}", artifacts.results.display());
                    println!("manifest: {}", artifacts.manifest.display());
                    if let Some(samples) = artifacts.samples {
                        println!("samples: {}", samples.display());
                    }
                    if let Some(stein) = artifacts.stein {
                        println!("stein: {}", stein.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("run error: {e}");
                    ExitCode::from(3)
                }
            }
        }
        Command::Validate { config } => match config::resolve(&config) {
            Ok(resolved) => {
                println!("ok: {} ({})", resolved.config.id, resolved.config.experiment.as_str());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("config error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Compare { run_a, run_b } => match compare::compare(&run_a, &run_b) {
            Ok(rows) => {
                if let Err(e) = compare::write_report(&rows, std::io::stdout().lock()) {
                    eprintln!("compare error: {e}");
                    return ExitCode::from(3);
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("compare error: {e}");
                ExitCode::from(3)
            }
        },
    }
}

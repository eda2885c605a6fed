//! `fspec`: command-line front end for Fourier spectrum estimation, product
//! bound checks and capacity box dimensions. Every run writes CSV files into
//! `--out` together with `.provenance` sidecars.

mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use config::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(outcome) => {
            for path in &outcome.written {
                println!("wrote {}", path.display());
            }
            if outcome.violations > 0 {
                eprintln!("{} VIOLATION_CANDIDATE verdict(s)", outcome.violations);
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

mod args;
mod commands;
mod config;
mod json;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use fdbench_core::{Error, Result};

use crate::args::{Cli, Command};

/// Sizes the global rayon pool from `FDBENCH_NUM_THREADS` when set.
fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("FDBENCH_NUM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Validation(format!("FDBENCH_NUM_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Validation(e.to_string()))
}

fn run(cli: &Cli) -> Result<()> {
    init_threads()?;
    match &cli.command {
        Command::Convert(a) => commands::convert(a),
        Command::Metric(a) => commands::metric(a),
        Command::Diagnose(a) => commands::diagnose(a),
        Command::Align(a) => commands::align(a),
        Command::Consistency(a) => commands::consistency(a),
        Command::Simulate(a) => commands::simulate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io_or_format() { 2 } else { 1 })
        }
    }
}

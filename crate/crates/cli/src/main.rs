mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;
use thiserror::Error;

use args::{Cli, Command};

/// Failure classes and their exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Verify(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Param(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Verify(_) => 1,
            CliError::Io(_) | CliError::Format(_) => 2,
            CliError::Param(_) => 3,
        }
    }
}

impl From<sakura_core::Error> for CliError {
    fn from(e: sakura_core::Error) -> Self {
        match e {
            sakura_core::Error::Io(_) => CliError::Io(e.to_string()),
            e if e.is_input_error() => CliError::Format(e.to_string()),
            e => CliError::Param(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Drift(c) => commands::drift(c),
        Command::Simulate(c) => commands::simulate(c),
        Command::Sweep(c) => commands::sweep_cmd(c),
        Command::Sample(c) => commands::sample(c),
        Command::Selftest(c) => commands::selftest(c),
        Command::Lut(c) => commands::lut(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

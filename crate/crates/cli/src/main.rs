//! `inthedge`: calibrate support bounds, price claims with integer hedges,
//! check convergence to the real-strategy price, backtest, and emit plot
//! data.
//!
//! Exit codes: 0 on success, 2 for invalid input, 3 when a library
//! invariant breaks.

mod args;
mod commands;
mod config;
mod payoff;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use config::Config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<inthedge_core::Error> for CliError {
    fn from(e: inthedge_core::Error) -> Self {
        if e.is_internal() {
            CliError::Internal(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Input(_) => ExitCode::from(2),
            CliError::Internal(_) => ExitCode::from(3),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = Config::from_env()?;
    match cli.command {
        Command::Calibrate(a) => commands::calibrate_cmd(a, &config),
        Command::Price(a) => commands::price_cmd(a, &config),
        Command::Verify(a) => commands::verify_cmd(a, &config),
        Command::Backtest(a) => commands::backtest_cmd(a, &config),
        Command::Plotdata(a) => commands::plotdata_cmd(a, &config),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

//! Defaults read from the JSON file named by `INTHEDGE_CONFIG`. Keys are the
//! long flag names in snake case; a flag on the command line always wins.

use std::path::PathBuf;

use serde::Deserialize;

use crate::args::{Backend, Mode, PayoffKind};
use crate::CliError;

pub const ENV_VAR: &str = "INTHEDGE_CONFIG";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub period_length: Option<usize>,
    pub mode: Option<Mode>,
    pub epsilon: Option<f64>,
    pub strict: Option<bool>,
    pub payoff: Option<PayoffKind>,
    pub strike: Option<f64>,
    pub knots: Option<Vec<(f64, f64)>>,
    pub final_slope: Option<f64>,
    pub n: Option<u64>,
    pub n_list: Option<Vec<u64>>,
    pub backend: Option<Backend>,
    pub step: Option<f64>,
    pub s0_max: Option<f64>,
    pub cap: Option<f64>,
    pub bins: Option<usize>,
    pub train_fraction: Option<f64>,
    pub date: Option<usize>,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub points: Option<usize>,
}

impl Config {
    pub fn from_env() -> Result<Self, CliError> {
        match std::env::var_os(ENV_VAR) {
            None => Ok(Config::default()),
            Some(path) => Self::load(PathBuf::from(path)),
        }
    }

    fn load(path: PathBuf) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Input(format!("{ENV_VAR}={}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{ENV_VAR}={}: {e}", path.display())))
    }
}

/// Flag, then config, then built-in default.
pub fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

/// Flag, then config; an error naming the flag if neither is set.
pub fn require<T>(flag: Option<T>, config: Option<T>, name: &str) -> Result<T, CliError> {
    flag.or(config)
        .ok_or_else(|| CliError::Input(format!("--{name} is required")))
}

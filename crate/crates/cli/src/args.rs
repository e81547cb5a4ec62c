use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use inthedge_core::calibration::CalibrationMode;
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(
    name = "inthedge",
    version,
    about = "Super-hedging prices and integer hedging strategies for piecewise-affine claims",
    after_help = "Defaults for any flag can be set in a JSON file named by INTHEDGE_CONFIG, \
                  using the flag name in snake case as key."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate per-step support bounds from a `date,price` CSV.
    Calibrate(CalibrateArgs),
    /// Run the backward recursion and save the pricing table.
    Price(PriceArgs),
    /// Check integer per-unit prices against the real-strategy price.
    Verify(VerifyArgs),
    /// Replay a pricing table's strategy on historical periods.
    Backtest(BacktestArgs),
    /// Emit per-unit price curves as CSV for plotting.
    Plotdata(PlotArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    PerStep,
    Pooled,
}

impl From<Mode> for CalibrationMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::PerStep => CalibrationMode::PerStep,
            Mode::Pooled => CalibrationMode::Pooled,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Exact,
    Grid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PayoffKind {
    Call,
    Put,
    Custom,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub csv: PathBuf,
    /// Observations per period, `T + 1`.
    #[arg(long)]
    pub period_length: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Margin used when an estimate leaves `k_down < 1 < k_up` [default: 1e-4].
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Fail instead of adjusting degenerate estimates.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PayoffArgs {
    #[arg(long, value_enum)]
    pub payoff: Option<PayoffKind>,
    #[arg(long)]
    pub strike: Option<f64>,
    /// Custom payoff knots as `x:y` pairs, e.g. `0:0,90:0,100:10,110:0`.
    #[arg(long, value_delimiter = ',', value_parser = parse_knot)]
    pub knots: Option<Vec<(f64, f64)>>,
    /// Slope of a custom payoff beyond its last knot.
    #[arg(long, allow_negative_numbers = true)]
    pub final_slope: Option<f64>,
}

fn parse_knot(s: &str) -> Result<(f64, f64), String> {
    let (x, y) = s
        .split_once(':')
        .ok_or_else(|| format!("knot {s:?} is not of the form x:y"))?;
    let x = x.trim().parse().map_err(|e| format!("knot {s:?}: {e}"))?;
    let y = y.trim().parse().map_err(|e| format!("knot {s:?}: {e}"))?;
    Ok((x, y))
}

#[derive(Debug, Args)]
pub struct PriceArgs {
    /// Support model JSON (a calibration output works).
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub payoff: PayoffArgs,
    /// Number of claims [default: 1].
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long, value_enum)]
    pub backend: Option<Backend>,
    /// Grid spacing for the grid backend [default: 0.1].
    #[arg(long)]
    pub step: Option<f64>,
    /// Largest initial spot covered by the grid backend [default: 1000].
    #[arg(long)]
    pub s0_max: Option<f64>,
    /// Also print the date-0 price and share count at this spot.
    #[arg(long)]
    pub spot: Option<f64>,
    /// Output JSON file (exact backend) or directory (grid backend).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub payoff: PayoffArgs,
    /// Claim counts to check [default: 1,2,5,10,50,100].
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<u64>>,
    /// Spot cap `M` [default: s0_max times the product of k_up].
    #[arg(long)]
    pub cap: Option<f64>,
    /// Used for the default cap [default: 1000].
    #[arg(long)]
    pub s0_max: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    /// Pricing table JSON, or a grid table directory.
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long)]
    pub csv: PathBuf,
    /// Histogram bins [default: 20].
    #[arg(long)]
    pub bins: Option<usize>,
    /// Replay only the periods after this fraction of the data.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Report JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Histogram CSV [default: the report path with extension `histogram.csv`].
    #[arg(long)]
    pub histogram_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Pricing table JSON or grid directory; replaces --model and the payoff flags.
    #[arg(long, conflicts_with_all = ["model", "n_list"])]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub payoff: PayoffArgs,
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<u64>>,
    /// Date `t` of the curves `g(t, x, n) / n` [default: 0].
    #[arg(long)]
    pub date: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub x_min: Option<f64>,
    /// [default: 1000]
    #[arg(long)]
    pub x_max: Option<f64>,
    /// [default: 1001]
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

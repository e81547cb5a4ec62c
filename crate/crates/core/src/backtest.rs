//! Forward replay of a hedging strategy on realised paths.
//!
//! The portfolio starts at the table price of `S_0` and holds the table's
//! share count between dates, so `V_{t+1} = V_t + θ_t (S_{t+1} - S_t)`. The
//! hedging error is reported in percent of the final spot,
//! `ε_T = 100 (V_T - n g(S_T)) / S_T`.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::calibration::{PricePath, TrainingSet};
use crate::error::{Error, Result};
use crate::grid::GridTable;
use crate::par;
use crate::pricer::{PricingTable, SupportModel};

pub const DEFAULT_BINS: usize = 20;

/// What a replay needs from a pricing backend.
pub trait HedgeTable: Sync {
    fn n_units(&self) -> u64;
    fn model(&self) -> &SupportModel;
    fn initial_price(&self, s: f64) -> f64;
    /// Shares held over `(t, t+1]` at spot `s`.
    fn theta(&self, t: usize, s: f64) -> i64;
    /// `n` times the payoff.
    fn claim(&self, s: f64) -> f64;

    fn horizon(&self) -> usize {
        self.model().horizon()
    }
}

impl HedgeTable for PricingTable {
    fn n_units(&self) -> u64 {
        self.n_units
    }

    fn model(&self) -> &SupportModel {
        &self.model
    }

    fn initial_price(&self, s: f64) -> f64 {
        self.prices[0].value_at(s)
    }

    fn theta(&self, t: usize, s: f64) -> i64 {
        self.strategies[t].eval(s)
    }

    fn claim(&self, s: f64) -> f64 {
        self.prices[self.horizon].value_at(s)
    }
}

impl HedgeTable for GridTable {
    fn n_units(&self) -> u64 {
        self.n_units
    }

    fn model(&self) -> &SupportModel {
        &self.model
    }

    fn initial_price(&self, s: f64) -> f64 {
        self.price_at(0, s)
    }

    fn theta(&self, t: usize, s: f64) -> i64 {
        self.theta_at(t, s)
    }

    fn claim(&self, s: f64) -> f64 {
        self.n_units as f64 * self.payoff.value_at(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub start_date: NaiveDate,
    pub initial_spot: f64,
    pub terminal_spot: f64,
    pub initial_price: f64,
    pub terminal_wealth: f64,
    pub payoff: f64,
    /// `ε_T` in percent.
    pub relative_error: f64,
    pub support_breach: bool,
    /// First step `t` whose move `S_t → S_{t+1}` left the support band.
    pub first_breach_step: Option<usize>,
    pub thetas: Vec<i64>,
}

/// `100 (V_T - payoff) / S_T`.
pub fn relative_error(terminal_wealth: f64, payoff: f64, terminal_spot: f64) -> f64 {
    100.0 * (terminal_wealth - payoff) / terminal_spot
}

pub fn replay(table: &dyn HedgeTable, path: &PricePath) -> Result<PathRecord> {
    let horizon = table.horizon();
    if path.len() != horizon + 1 {
        return Err(Error::input(format!(
            "path has {} observations but the table needs T + 1 = {}",
            path.len(),
            horizon + 1
        )));
    }
    let s = path.prices();
    let model = table.model();
    let initial_price = table.initial_price(s[0]);
    let mut wealth = initial_price;
    let mut thetas = Vec::with_capacity(horizon);
    let mut first_breach_step = None;
    for t in 0..horizon {
        let theta = table.theta(t, s[t]);
        wealth += theta as f64 * (s[t + 1] - s[t]);
        thetas.push(theta);
        if first_breach_step.is_none() && !model.contains_move(t, s[t], s[t + 1]) {
            first_breach_step = Some(t);
        }
    }
    let payoff = table.claim(s[horizon]);
    Ok(PathRecord {
        start_date: path.dates()[0],
        initial_spot: s[0],
        terminal_spot: s[horizon],
        initial_price,
        terminal_wealth: wealth,
        payoff,
        relative_error: relative_error(wealth, payoff, s[horizon]),
        support_breach: first_breach_step.is_some(),
        first_breach_step,
        thetas,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl Summary {
    /// Sums in sorted order so the result does not depend on path order.
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.collect();
        v.sort_by(f64::total_cmp);
        let count = v.len();
        Summary {
            count,
            mean: (count > 0).then(|| v.iter().sum::<f64>() / count as f64),
            min: v.first().copied(),
            max: v.last().copied(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: usize,
}

/// Equal-width bins over `[min, max]`; the last bin is closed. A single
/// distinct value gets bins of unit total width centred on it.
pub fn histogram(values: &[f64], bins: usize) -> Result<Vec<Bin>> {
    if bins == 0 {
        return Err(Error::input("histogram needs at least one bin"));
    }
    if values.is_empty() {
        return Ok(Vec::new());
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    };
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<Bin> = (0..bins)
        .map(|b| Bin {
            bin_left: lo + b as f64 * width,
            bin_right: if b + 1 == bins {
                hi
            } else {
                lo + (b + 1) as f64 * width
            },
            count: 0,
        })
        .collect();
    for &v in values {
        let b = (((v - lo) / width).floor() as usize).min(bins - 1);
        out[b].count += 1;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub n: u64,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub paths: Vec<PathRecord>,
    pub all: Summary,
    /// Paths whose every move stayed inside the support band.
    pub in_support: Summary,
    pub breached: usize,
    pub histogram: Vec<Bin>,
}

impl BacktestReport {
    pub fn write_histogram_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for bin in &self.histogram {
            w.serialize(bin)?;
        }
        if self.histogram.is_empty() {
            w.write_record(["bin_left", "bin_right", "count"])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Replays every test period and summarises `ε_T`.
pub fn run_backtest(
    table: &dyn HedgeTable,
    test: &TrainingSet,
    bins: usize,
) -> Result<BacktestReport> {
    if test.periods().is_empty() {
        return Err(Error::input("the test set is empty"));
    }
    if bins == 0 {
        return Err(Error::input("histogram needs at least one bin"));
    }
    let paths = par::map(test.periods(), |p| replay(table, p))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = paths.iter().map(|p| p.relative_error).collect();
    Ok(BacktestReport {
        n: table.n_units(),
        horizon: table.horizon(),
        all: Summary::of(errors.iter().copied()),
        in_support: Summary::of(
            paths
                .iter()
                .filter(|p| !p.support_breach)
                .map(|p| p.relative_error),
        ),
        breached: paths.iter().filter(|p| p.support_breach).count(),
        histogram: histogram(&errors, bins)?,
        paths,
    })
}

//! Support bounds estimated from historical price paths.
//!
//! Each training period is a window of `T + 1` consecutive observations.
//! `k_down[t]` and `k_up[t]` are the smallest and largest gross return
//! `S_{t+1} / S_t` seen at step `t` across periods, or across all steps in
//! pooled mode. Estimates that leave `0 < k_down < 1 < k_up` are moved to
//! `1 ∓ ε` and reported, or rejected in strict mode.

use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pricer::SupportModel;

pub const DEFAULT_EPSILON: f64 = 1e-4;

/// Dated positive spot observations.
#[derive(Clone, Debug, PartialEq)]
pub struct PricePath {
    dates: Vec<NaiveDate>,
    prices: Vec<f64>,
}

#[derive(Deserialize)]
struct CsvRow {
    date: NaiveDate,
    price: f64,
}

impl PricePath {
    pub fn new(dates: Vec<NaiveDate>, prices: Vec<f64>) -> Result<Self> {
        if dates.len() != prices.len() {
            return Err(Error::input(format!(
                "{} dates but {} prices",
                dates.len(),
                prices.len()
            )));
        }
        for (i, &p) in prices.iter().enumerate() {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::input(format!(
                    "observation {} ({}): price must be positive, got {p}",
                    i + 1,
                    dates[i]
                )));
            }
        }
        if let Some(i) = dates.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::input(format!(
                "observation {}: dates must be strictly increasing ({} then {})",
                i + 2,
                dates[i],
                dates[i + 1]
            )));
        }
        Ok(PricePath { dates, prices })
    }

    /// Prices with consecutive placeholder dates starting at 2000-01-01.
    pub fn undated(prices: Vec<f64>) -> Result<Self> {
        let start = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
        let dates = start.iter_days().take(prices.len()).collect();
        Self::new(dates, prices)
    }

    /// Reads a `date,price` CSV with ISO-8601 dates. Row numbers in errors
    /// count the header as row 1.
    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut dates = Vec::new();
        let mut prices = Vec::new();
        for (i, rec) in r.deserialize::<CsvRow>().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| Error::input(format!("row {row}: {e}")))?;
            if !(rec.price > 0.0 && rec.price.is_finite()) {
                return Err(Error::input(format!(
                    "row {row} ({}): price must be positive, got {}",
                    rec.date, rec.price
                )));
            }
            dates.push(rec.date);
            prices.push(rec.price);
        }
        Self::new(dates, prices)
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
        Self::from_reader(file)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["date", "price"])?;
        for (d, p) in self.dates.iter().zip(&self.prices) {
            w.write_record([d.to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    /// Observations `range.start..range.end` as a new path.
    pub fn slice(&self, range: std::ops::Range<usize>) -> PricePath {
        PricePath {
            dates: self.dates[range.clone()].to_vec(),
            prices: self.prices[range].to_vec(),
        }
    }

    /// `S_{t+1} / S_t` for every step.
    pub fn ratios(&self) -> Vec<f64> {
        self.prices.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

/// Periods of equal length `T + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    periods: Vec<PricePath>,
}

impl TrainingSet {
    pub fn new(periods: Vec<PricePath>) -> Result<Self> {
        let Some(first) = periods.first() else {
            return Err(Error::input("a training set needs at least one period"));
        };
        let len = first.len();
        if len < 2 {
            return Err(Error::input("each period needs at least 2 observations"));
        }
        if let Some(j) = periods.iter().position(|p| p.len() != len) {
            return Err(Error::input(format!(
                "period {j} has {} observations, expected {len}",
                periods[j].len()
            )));
        }
        Ok(TrainingSet { periods })
    }

    pub fn periods(&self) -> &[PricePath] {
        &self.periods
    }

    pub fn horizon(&self) -> usize {
        self.periods[0].len() - 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMode {
    /// Separate bounds for every step `t`.
    PerStep,
    /// One pair of bounds from all steps together.
    Pooled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    KDown,
    KUp,
}

/// A bound that was moved to `1 ∓ ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adjustment {
    pub step: usize,
    pub bound: Bound,
    pub estimate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibratedModel {
    pub k_down: Vec<f64>,
    pub k_up: Vec<f64>,
    pub adjusted_steps: Vec<Adjustment>,
    pub mode: CalibrationMode,
    pub epsilon: f64,
}

impl CalibratedModel {
    pub fn model(&self) -> Result<SupportModel> {
        SupportModel::new(self.k_down.clone(), self.k_up.clone())
    }
}

/// Extremal gross returns of the training periods, `ε`-adjusted into
/// `0 < k_down < 1 < k_up` unless `strict`.
pub fn calibrate(
    train: &TrainingSet,
    mode: CalibrationMode,
    epsilon: f64,
    strict: bool,
) -> Result<CalibratedModel> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::input(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    let horizon = train.horizon();
    let ratios: Vec<Vec<f64>> = train.periods().iter().map(PricePath::ratios).collect();
    let extremes = |steps: &mut dyn Iterator<Item = usize>| {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in steps {
            for r in &ratios {
                lo = lo.min(r[t]);
                hi = hi.max(r[t]);
            }
        }
        (lo, hi)
    };
    let (mut k_down, mut k_up): (Vec<f64>, Vec<f64>) = match mode {
        CalibrationMode::PerStep => (0..horizon)
            .map(|t| extremes(&mut std::iter::once(t)))
            .unzip(),
        CalibrationMode::Pooled => {
            let (lo, hi) = extremes(&mut (0..horizon));
            (vec![lo; horizon], vec![hi; horizon])
        }
    };

    let mut adjusted_steps = Vec::new();
    for t in 0..horizon {
        if k_down[t] >= 1.0 {
            adjusted_steps.push(Adjustment {
                step: t,
                bound: Bound::KDown,
                estimate: k_down[t],
            });
            k_down[t] = 1.0 - epsilon;
        }
        if k_up[t] <= 1.0 {
            adjusted_steps.push(Adjustment {
                step: t,
                bound: Bound::KUp,
                estimate: k_up[t],
            });
            k_up[t] = 1.0 + epsilon;
        }
    }
    if strict {
        if let Some(a) = adjusted_steps.first() {
            return Err(Error::input(format!(
                "step {}: estimated {} = {} violates 0 < k_down < 1 < k_up",
                a.step,
                match a.bound {
                    Bound::KDown => "k_down",
                    Bound::KUp => "k_up",
                },
                a.estimate
            )));
        }
    }
    SupportModel::new(k_down.clone(), k_up.clone())?;
    Ok(CalibratedModel {
        k_down,
        k_up,
        adjusted_steps,
        mode,
        epsilon,
    })
}

/// Consecutive, non-overlapping windows of `period_length` observations
/// covering `full[from..to]` from the left. A leftover tail is dropped.
fn windows(full: &PricePath, from: usize, to: usize, period_length: usize) -> Vec<PricePath> {
    (from..to)
        .step_by(period_length)
        .filter(|&a| a + period_length <= to)
        .map(|a| full.slice(a..a + period_length))
        .collect()
}

/// Tiles the whole of `full` with periods of `period_length` observations.
pub fn tile(full: &PricePath, period_length: usize) -> Result<TrainingSet> {
    if period_length < 2 {
        return Err(Error::input("period length must be at least 2"));
    }
    let periods = windows(full, 0, full.len(), period_length);
    if periods.is_empty() {
        return Err(Error::input(format!(
            "{} observations do not fill one period of length {period_length}",
            full.len()
        )));
    }
    TrainingSet::new(periods)
}

/// Cuts `full` at `round(train_fraction * len)` and tiles each side with
/// consecutive, non-overlapping windows of `period_length` observations,
/// starting from the left of each side. Leftover observations are dropped.
pub fn split_train_test(
    full: &PricePath,
    period_length: usize,
    train_fraction: f64,
) -> Result<(TrainingSet, TrainingSet)> {
    if period_length < 2 {
        return Err(Error::input("period length must be at least 2"));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::input(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let split = (train_fraction * full.len() as f64).round() as usize;
    let train = windows(full, 0, split, period_length);
    let test = windows(full, split, full.len(), period_length);
    if train.is_empty() || test.is_empty() {
        return Err(Error::input(format!(
            "{} observations split at {split} leave {} training and {} test periods of length \
             {period_length}; both sides need at least one",
            full.len(),
            train.len(),
            test.len()
        )));
    }
    Ok((TrainingSet::new(train)?, TrainingSet::new(test)?))
}

//! Backward pricing on a uniform spot grid.
//!
//! Prices are kept as arrays over the nodes `x_i = i * step`. The grid at
//! date `t` reaches `s0_max * (max k_up)^t`, enough to hold every spot
//! reachable from `[0, s0_max]`. One backward step evaluates, for each node
//! and each integer `θ`, the largest value of `g(x) - θ x` over the grid
//! nodes inside the window plus the two window ends (linearly
//! interpolated), then keeps the cheapest `θ`.
//!
//! Tables can be saved as a JSON manifest and one `x,price,theta` CSV per
//! date.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::pricer::SupportModel;
use crate::pwa::{tolerance, PiecewiseAffine, SlidingMax};

const INDEX_SLACK: f64 = 1e-9;
const CHUNK: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub step: f64,
    pub s0_max: f64,
}

impl GridSpec {
    pub const DEFAULT_STEP: f64 = 0.1;

    pub fn new(step: f64, s0_max: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::input(format!(
                "grid step must be positive, got {step}"
            )));
        }
        if !(s0_max.is_finite() && s0_max >= step) {
            return Err(Error::input(format!(
                "s0_max must be at least one step ({step}), got {s0_max}"
            )));
        }
        Ok(GridSpec { step, s0_max })
    }

    /// Last node index `N_t` for `t = 0..=T`: the largest `i` with
    /// `i * step ≤ s0_max * (max k_up)^t`.
    pub fn sizes(&self, model: &SupportModel) -> Vec<usize> {
        let k = model.max_k_up();
        (0..=model.horizon())
            .map(|t| {
                let cap = self.s0_max * k.powi(t as i32);
                let mut n = (cap / self.step).floor() as usize;
                while n as f64 * self.step > cap {
                    n -= 1;
                }
                n
            })
            .collect()
    }
}

/// Grid prices and strategies for `t = 0..=T`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridTable {
    pub n_units: u64,
    pub horizon: usize,
    pub model: SupportModel,
    pub grid: GridSpec,
    /// Per-unit payoff; `prices[T]` samples `n` times it.
    pub payoff: PiecewiseAffine,
    pub prices: Vec<Vec<f64>>,
    /// `thetas[t]` for `t = 0..T`.
    pub thetas: Vec<Vec<i64>>,
}

impl GridTable {
    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.grid.step
    }

    /// Price at date `t` and spot `x`, interpolated linearly between nodes
    /// and extrapolated past the last one.
    pub fn price_at(&self, t: usize, x: f64) -> f64 {
        interpolate(&self.prices[t], x / self.grid.step)
    }

    /// Shares held over `(t, t+1]` at spot `x`: the value at the nearest node.
    pub fn theta_at(&self, t: usize, x: f64) -> i64 {
        let row = &self.thetas[t];
        let i = (x / self.grid.step).round().max(0.0) as usize;
        row[i.min(row.len() - 1)]
    }

    /// Writes `manifest.json` and `prices_t{t}.csv` for every date into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let files: Vec<String> = (0..=self.horizon).map(step_file_name).collect();
        let manifest = Manifest {
            backend: "grid".into(),
            n: self.n_units,
            horizon: self.horizon,
            model: self.model.clone(),
            step: self.grid.step,
            s0_max: self.grid.s0_max,
            payoff: self.payoff.clone(),
            sizes: self.prices.iter().map(|p| p.len() - 1).collect(),
            files: files.clone(),
        };
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        for (t, file) in files.iter().enumerate() {
            let mut w = csv::Writer::from_path(dir.join(file))?;
            w.write_record(["x", "price", "theta"])?;
            for (i, &p) in self.prices[t].iter().enumerate() {
                let theta = self
                    .thetas
                    .get(t)
                    .map(|row| row[i].to_string())
                    .unwrap_or_default();
                w.write_record([self.node(i).to_string(), p.to_string(), theta])?;
            }
            w.flush()?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
        if manifest.backend != "grid" {
            return Err(Error::input(format!(
                "unknown backend {:?}",
                manifest.backend
            )));
        }
        if manifest.files.len() != manifest.horizon + 1
            || manifest.model.horizon() != manifest.horizon
        {
            return Err(Error::input(
                "manifest horizon does not match its files or model",
            ));
        }
        let grid = GridSpec::new(manifest.step, manifest.s0_max)?;
        let mut prices = Vec::with_capacity(manifest.horizon + 1);
        let mut thetas = Vec::with_capacity(manifest.horizon);
        for (t, file) in manifest.files.iter().enumerate() {
            let mut r = csv::Reader::from_path(dir.join(file))?;
            let mut row_prices = Vec::new();
            let mut row_thetas = Vec::new();
            for rec in r.deserialize() {
                let rec: StepRow = rec?;
                row_prices.push(rec.price);
                if t < manifest.horizon {
                    row_thetas.push(rec.theta.ok_or_else(|| {
                        Error::input(format!("{file}: missing theta at x = {}", rec.x))
                    })?);
                }
            }
            if row_prices.len() != manifest.sizes.get(t).map_or(0, |n| n + 1) {
                return Err(Error::input(format!("{file}: unexpected number of rows")));
            }
            prices.push(row_prices);
            if t < manifest.horizon {
                thetas.push(row_thetas);
            }
        }
        Ok(GridTable {
            n_units: manifest.n,
            horizon: manifest.horizon,
            model: manifest.model,
            grid,
            payoff: manifest.payoff,
            prices,
            thetas,
        })
    }
}

pub const MANIFEST: &str = "manifest.json";

fn step_file_name(t: usize) -> String {
    format!("prices_t{t:04}.csv")
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    backend: String,
    n: u64,
    #[serde(rename = "T")]
    horizon: usize,
    model: SupportModel,
    step: f64,
    s0_max: f64,
    payoff: PiecewiseAffine,
    sizes: Vec<usize>,
    files: Vec<String>,
}

#[derive(Deserialize)]
struct StepRow {
    x: f64,
    price: f64,
    theta: Option<i64>,
}

/// Linear interpolation of `y` at fractional index `u ≥ 0`, linear
/// extrapolation past the end.
fn interpolate(y: &[f64], u: f64) -> f64 {
    let last = y.len() - 1;
    if last == 0 {
        return y[0];
    }
    let j = (u.floor() as usize).min(last - 1);
    y[j] + (u - j as f64) * (y[j + 1] - y[j])
}

fn discrete_lipschitz(y: &[f64], step: f64) -> f64 {
    y.windows(2)
        .fold(0.0f64, |acc, w| acc.max((w[1] - w[0]).abs()))
        / step
}

/// Grid prices at date `t` from the date `t + 1` array `next`.
fn grid_step(next: &[f64], size: usize, step: f64, k_down: f64, k_up: f64) -> (Vec<f64>, Vec<i64>) {
    let l = discrete_lipschitz(next, step);
    let thetas: Vec<i64> = ((-l - 1.0).ceil() as i64..=(l + 1.0).floor() as i64).collect();
    let last = next.len() - 1;
    let window = |i: usize| {
        let lo = (k_down * i as f64 - INDEX_SLACK).ceil().max(0.0) as usize;
        let hi = ((k_up * i as f64 + INDEX_SLACK).floor() as usize).min(last);
        (lo, hi)
    };
    let chunks: Vec<(usize, usize)> = (0..=size)
        .step_by(CHUNK)
        .map(|a| (a, (a + CHUNK).min(size + 1)))
        .collect();
    let parts = par::map_owned(chunks, |(a, b)| {
        let base = window(a).0;
        let top = window(b - 1).1;
        let mut best = vec![f64::INFINITY; b - a];
        let mut arg = vec![0i64; b - a];
        let mut z = vec![0.0; top + 1 - base];
        for &theta in &thetas {
            let th = theta as f64;
            for (k, zk) in z.iter_mut().enumerate() {
                let j = base + k;
                *zk = next[j] - th * j as f64 * step;
            }
            let mut sliding = SlidingMax::new(&z);
            for i in a..b {
                let (lo, hi) = window(i);
                let (ulo, uhi) = (k_down * i as f64, k_up * i as f64);
                let mut sup = (interpolate(next, ulo) - th * ulo * step)
                    .max(interpolate(next, uhi) - th * uhi * step);
                if lo <= hi {
                    if let Some(k) = sliding.advance(lo - base, hi + 1 - base) {
                        sup = sup.max(z[k]);
                    }
                }
                let v = sup + th * i as f64 * step;
                let slot = i - a;
                // Thetas ascend, so a later one only wins when clearly cheaper.
                if v < best[slot] - 0.1 * tolerance(best[slot]) {
                    arg[slot] = theta;
                }
                best[slot] = best[slot].min(v);
            }
        }
        (best, arg)
    });
    let mut prices = Vec::with_capacity(size + 1);
    let mut strategy = Vec::with_capacity(size + 1);
    for (p, s) in parts {
        prices.extend(p);
        strategy.extend(s);
    }
    (prices, strategy)
}

/// Backward recursion on the grid from `n_units * payoff`.
pub fn grid_backward_price(
    payoff: &PiecewiseAffine,
    n_units: u64,
    model: &SupportModel,
    grid: &GridSpec,
) -> Result<GridTable> {
    if n_units == 0 {
        return Err(Error::input("the number of claims must be at least 1"));
    }
    let grid = GridSpec::new(grid.step, grid.s0_max)?;
    let sizes = grid.sizes(model);
    let horizon = model.horizon();
    let scaled = payoff.scale(n_units as f64);
    let terminal: Vec<f64> = (0..=sizes[horizon])
        .map(|i| scaled.value_at(i as f64 * grid.step))
        .collect();
    let mut prices = vec![terminal];
    let mut thetas = Vec::with_capacity(horizon);
    for t in (0..horizon).rev() {
        let (k_down, k_up) = model.step(t);
        let (p, th) = grid_step(
            prices.last().expect("nonempty"),
            sizes[t],
            grid.step,
            k_down,
            k_up,
        );
        prices.push(p);
        thetas.push(th);
    }
    prices.reverse();
    thetas.reverse();
    Ok(GridTable {
        n_units,
        horizon,
        model: model.clone(),
        grid,
        payoff: payoff.normalize(),
        prices,
        thetas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricer::backward_price;

    fn model(t: usize) -> SupportModel {
        SupportModel::constant(0.9, 1.2, t).unwrap()
    }

    #[test]
    fn sizes_follow_the_cap() {
        let g = GridSpec::new(0.1, 1000.0).unwrap();
        let sizes = g.sizes(&model(3));
        assert_eq!(sizes[0], 10000);
        for (t, &n) in sizes.iter().enumerate() {
            let cap = 1000.0 * 1.2f64.powi(t as i32);
            assert!(n as f64 * 0.1 <= cap);
            assert!((n + 1) as f64 * 0.1 > cap);
        }
    }

    #[test]
    fn one_step_call() {
        let g = GridSpec::new(0.1, 1000.0).unwrap();
        let call = PiecewiseAffine::call(500.0).unwrap();
        let table = grid_backward_price(&call, 1, &model(1), &g).unwrap();
        assert!((table.price_at(0, 500.0) - 50.0).abs() <= 0.05);
        assert_eq!(table.theta_at(0, 500.0), 1);
        assert_eq!(table.price_at(0, 400.0), 0.0);
        let exact = backward_price(&call, 1, &model(1)).unwrap();
        for i in 0..=10000 {
            let x = i as f64 * 0.1;
            assert!((table.prices[0][i] - exact.prices[0].value_at(x)).abs() <= 0.1 + 1e-9);
        }
    }

    #[test]
    fn zero_payoff() {
        let g = GridSpec::new(0.5, 100.0).unwrap();
        let table = grid_backward_price(&PiecewiseAffine::zero(), 3, &model(2), &g).unwrap();
        assert!(table.prices.iter().flatten().all(|&p| p == 0.0));
        assert!(table.thetas.iter().flatten().all(|&t| t == 0));
    }

    #[test]
    fn rejects_bad_grid() {
        assert!(GridSpec::new(0.0, 10.0).is_err());
        assert!(GridSpec::new(1.0, 0.5).is_err());
        assert!(GridSpec::new(f64::NAN, 10.0).is_err());
    }

    #[test]
    fn interpolation_and_extrapolation() {
        let y = [0.0, 1.0, 4.0];
        assert_eq!(interpolate(&y, 0.5), 0.5);
        assert_eq!(interpolate(&y, 2.0), 4.0);
        assert_eq!(interpolate(&y, 3.0), 7.0);
        assert_eq!(interpolate(&[2.0], 5.0), 2.0);
    }

    #[test]
    fn write_read_round_trip() {
        let dir = std::env::temp_dir().join(format!("inthedge-grid-{}", std::process::id()));
        let g = GridSpec::new(1.0, 50.0).unwrap();
        let call = PiecewiseAffine::call(40.0).unwrap();
        let table = grid_backward_price(&call, 2, &model(2), &g).unwrap();
        table.write(&dir).unwrap();
        let back = GridTable::read(&dir).unwrap();
        fs::remove_dir_all(&dir).unwrap();
        assert_eq!(back, table);
    }
}

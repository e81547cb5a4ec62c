//! Writes the bundled synthetic daily path: 756 business days from
//! 2019-06-06, starting at 100, with gross returns drawn uniformly from
//! [0.985, 1.015].
//!
//! cargo run -p inthedge-core --example synthetic_path -- crates/core/data/synthetic_path.csv

use chrono::{Datelike, NaiveDate, Weekday};
use inthedge_core::calibration::PricePath;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DAYS: usize = 756;
const SEED: u64 = 20190606;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "synthetic_path.csv".to_string());
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let start = NaiveDate::from_ymd_opt(2019, 6, 6).expect("valid date");
    let dates: Vec<NaiveDate> = start
        .iter_days()
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .take(DAYS)
        .collect();
    let mut prices = Vec::with_capacity(DAYS);
    let mut s = 100.0f64;
    for _ in 0..DAYS {
        prices.push((s * 1e6).round() / 1e6);
        s *= rng.gen_range(0.985..=1.015);
    }
    PricePath::new(dates, prices)?.write_csv(out.as_ref())?;
    Ok(())
}

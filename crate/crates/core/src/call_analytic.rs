//! Closed-form one-step price of `n` calls with integer hedges.
//!
//! With payoff `n (x - K)^+` and window `[k_down s, k_up s]` there are three
//! regions. Below `K / k_up` the claim is worthless on the whole window and
//! the price is zero with no shares held. Above `K / k_down` it is linear on
//! the window and the price is the intrinsic value `n (s - K)` with `n`
//! shares. In between, the cost of holding `θ` shares is the convex
//! function
//!
//! ```text
//! f(θ) = θ s (1 - k_down)                          if θ ≥ α
//!        θ s (1 - k_up) + n k_up s - n K           if θ < α
//! α    = (n k_up s - n K) / (s (k_up - k_down))
//! ```
//!
//! whose integer minimizer is `⌊α⌋` or `⌊α⌋ + 1`. The two are compared
//! directly; ties, up to rounding, go to `⌊α⌋`.

use crate::error::{Error, Result};
use crate::pwa::tolerance;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CallOneStepParams {
    pub strike: f64,
    pub n: u64,
    pub k_down: f64,
    pub k_up: f64,
    pub spot: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    /// `s ≤ K / k_up`
    Low,
    Middle,
    /// `s ≥ K / k_down`
    High,
}

impl CallOneStepParams {
    pub fn new(strike: f64, n: u64, k_down: f64, k_up: f64, spot: f64) -> Result<Self> {
        if !(strike > 0.0 && strike.is_finite()) {
            return Err(Error::input(format!(
                "strike must be positive, got {strike}"
            )));
        }
        if n == 0 {
            return Err(Error::input("the number of calls must be at least 1"));
        }
        if !(k_down > 0.0 && k_down < 1.0 && k_up > 1.0 && k_up.is_finite()) {
            return Err(Error::input(format!(
                "support bounds must satisfy 0 < k_down < 1 < k_up, got ({k_down}, {k_up})"
            )));
        }
        if !(spot > 0.0 && spot.is_finite()) {
            return Err(Error::input(format!("spot must be positive, got {spot}")));
        }
        Ok(CallOneStepParams {
            strike,
            n,
            k_down,
            k_up,
            spot,
        })
    }

    pub fn region(&self) -> Region {
        if self.k_up * self.spot <= self.strike {
            Region::Low
        } else if self.k_down * self.spot >= self.strike {
            Region::High
        } else {
            Region::Middle
        }
    }

    /// Cost of holding `theta` shares, valid in the middle region.
    fn middle_cost(&self, theta: f64, alpha: f64) -> f64 {
        let (s, n) = (self.spot, self.n as f64);
        if theta >= alpha {
            theta * s * (1.0 - self.k_down)
        } else {
            theta * s * (1.0 - self.k_up) + n * self.k_up * s - n * self.strike
        }
    }
}

/// Real share count at which the two branches of the cost cross. Only
/// defined when `k_down ≤ K / s ≤ k_up`.
pub fn alpha(p: &CallOneStepParams) -> Result<f64> {
    let (s, k) = (p.spot, p.strike);
    if p.k_down * s > k || p.k_up * s < k {
        return Err(Error::Region(format!(
            "alpha needs k_down <= K/s <= k_up, got K/s = {}",
            k / s
        )));
    }
    let n = p.n as f64;
    Ok((n * p.k_up * s - n * k) / (s * (p.k_up - p.k_down)))
}

/// Minimal one-step price and optimal integer share count.
pub fn closed_form(p: &CallOneStepParams) -> (f64, i64) {
    match p.region() {
        Region::Low => (0.0, 0),
        Region::High => (p.n as f64 * (p.spot - p.strike), p.n as i64),
        Region::Middle => {
            let a = alpha(p).expect("middle region");
            let m = a.floor();
            let (fm, fm1) = (p.middle_cost(m, a), p.middle_cost(m + 1.0, a));
            // Same tie tolerance as the generic pricer.
            if fm <= fm1 + 0.1 * tolerance(fm1) {
                (fm, m as i64)
            } else {
                (fm1, m as i64 + 1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: u64, s: f64) -> CallOneStepParams {
        CallOneStepParams::new(500.0, n, 0.9, 1.2, s).unwrap()
    }

    #[test]
    fn alpha_examples() {
        assert!((alpha(&params(1, 500.0)).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((alpha(&params(5, 500.0)).unwrap() - 10.0 / 3.0).abs() < 1e-14);
        let edge = CallOneStepParams::new(600.0, 1, 0.5, 1.5, 400.0).unwrap();
        assert_eq!(alpha(&edge).unwrap(), 0.0);
        assert!(matches!(alpha(&params(1, 400.0)), Err(Error::Region(_))));
        assert!(matches!(alpha(&params(1, 600.0)), Err(Error::Region(_))));
    }

    fn assert_closed_form(p: CallOneStepParams, value: f64, theta: i64) {
        let (v, th) = closed_form(&p);
        assert!(
            (v - value).abs() <= 1e-9 * value.abs().max(1.0),
            "{v} vs {value}"
        );
        assert_eq!(th, theta);
    }

    #[test]
    fn closed_form_examples() {
        assert_closed_form(params(1, 400.0), 0.0, 0);
        assert_closed_form(params(1, 600.0), 100.0, 1);
        assert_closed_form(params(1, 500.0), 50.0, 1);
        assert_closed_form(params(5, 500.0), 200.0, 3);
    }

    #[test]
    fn regions() {
        assert_eq!(params(1, 500.0 / 1.2).region(), Region::Low);
        assert_eq!(params(1, 500.0).region(), Region::Middle);
        assert_eq!(params(1, 500.0 / 0.9 + 1e-9).region(), Region::High);
    }

    #[test]
    fn continuous_across_region_boundaries() {
        for n in [1, 3, 7, 20] {
            for edge in [500.0 / 1.2, 500.0 / 0.9] {
                let below = closed_form(&params(n, edge * (1.0 - 1e-12))).0;
                let above = closed_form(&params(n, edge * (1.0 + 1e-12))).0;
                assert!((below - above).abs() < 1e-6, "n = {n}, edge = {edge}");
            }
        }
    }

    #[test]
    fn validation() {
        assert!(CallOneStepParams::new(0.0, 1, 0.9, 1.2, 1.0).is_err());
        assert!(CallOneStepParams::new(1.0, 0, 0.9, 1.2, 1.0).is_err());
        assert!(CallOneStepParams::new(1.0, 1, 1.0, 1.2, 1.0).is_err());
        assert!(CallOneStepParams::new(1.0, 1, 0.9, 1.2, 0.0).is_err());
    }
}

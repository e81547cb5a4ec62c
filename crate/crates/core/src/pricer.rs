//! Super-hedging with integer share counts.
//!
//! Between two dates the spot moves from `s` into the band
//! `[k_down * s, k_up * s]`. Holding `θ` shares, the cheapest capital that
//! covers the next-date price function `g` on every outcome is
//!
//! ```text
//! V(θ, s) = sup_{x ∈ [k_down s, k_up s]} (g(x) - θ x) + θ s,
//! ```
//!
//! and the one-step price is `min_{θ ∈ Z} V(θ, s)`. Because `g` is piecewise
//! affine the supremum is attained at a window endpoint or at a knot of `g`
//! inside the window, and the minimizing `θ` lies in `[-L-1, L+1]` where `L`
//! is the Lipschitz constant of `g`. The resulting price function is again
//! continuous and piecewise affine, so the recursion can be run from the
//! payoff back to date zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::pwa::{
    self, push_upper_envelope, tolerance, Affine, Builder, Envelope, Labeled, PiecewiseAffine,
    SlidingMax,
};

/// Per-step multiplicative support bounds of the spot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SupportModelRepr")]
pub struct SupportModel {
    k_down: Vec<f64>,
    k_up: Vec<f64>,
}

#[derive(Deserialize)]
struct SupportModelRepr {
    k_down: Vec<f64>,
    k_up: Vec<f64>,
}

impl TryFrom<SupportModelRepr> for SupportModel {
    type Error = Error;

    fn try_from(r: SupportModelRepr) -> Result<Self> {
        SupportModel::new(r.k_down, r.k_up)
    }
}

impl SupportModel {
    pub fn new(k_down: Vec<f64>, k_up: Vec<f64>) -> Result<Self> {
        if k_down.len() != k_up.len() {
            return Err(Error::input(format!(
                "k_down has {} steps but k_up has {}",
                k_down.len(),
                k_up.len()
            )));
        }
        for (t, (&d, &u)) in k_down.iter().zip(&k_up).enumerate() {
            check_support(d, u).map_err(|e| Error::input(format!("step {t}: {e}")))?;
        }
        Ok(SupportModel { k_down, k_up })
    }

    /// The same bounds at every one of `horizon` steps.
    pub fn constant(k_down: f64, k_up: f64, horizon: usize) -> Result<Self> {
        Self::new(vec![k_down; horizon], vec![k_up; horizon])
    }

    pub fn horizon(&self) -> usize {
        self.k_down.len()
    }

    pub fn k_down(&self) -> &[f64] {
        &self.k_down
    }

    pub fn k_up(&self) -> &[f64] {
        &self.k_up
    }

    /// `(k_down[t], k_up[t])`.
    pub fn step(&self, t: usize) -> (f64, f64) {
        (self.k_down[t], self.k_up[t])
    }

    pub fn max_k_up(&self) -> f64 {
        self.k_up.iter().copied().fold(1.0, f64::max)
    }

    /// `∏ k_up[t]`, the largest possible growth over the horizon.
    pub fn total_up(&self) -> f64 {
        self.k_up.iter().product()
    }

    /// Whether the ratio `next / prev` lies in the band of step `t`.
    pub fn contains_move(&self, t: usize, prev: f64, next: f64) -> bool {
        let (d, u) = self.step(t);
        let r = next / prev;
        r >= d * (1.0 - 1e-12) && r <= u * (1.0 + 1e-12)
    }
}

pub(crate) fn check_support(k_down: f64, k_up: f64) -> Result<()> {
    if k_down > 0.0 && k_down < 1.0 && k_up > 1.0 && k_up.is_finite() {
        Ok(())
    } else {
        Err(Error::input(format!(
            "support bounds must satisfy 0 < k_down < 1 < k_up < inf, got ({k_down}, {k_up})"
        )))
    }
}

pub(crate) fn check_spot(s: f64) -> Result<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "spot must be positive and finite, got {s}"
        )))
    }
}

/// Integer-valued, piecewise-constant function of the spot. Intervals are
/// left-closed: at a breakpoint the value of the interval to the right applies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepRepr")]
pub struct IntegerStepFunction {
    breakpoints: Vec<f64>,
    values: Vec<i64>,
}

#[derive(Deserialize)]
struct StepRepr {
    breakpoints: Vec<f64>,
    values: Vec<i64>,
}

impl TryFrom<StepRepr> for IntegerStepFunction {
    type Error = Error;

    fn try_from(r: StepRepr) -> Result<Self> {
        IntegerStepFunction::new(r.breakpoints, r.values)
    }
}

impl IntegerStepFunction {
    pub fn new(breakpoints: Vec<f64>, values: Vec<i64>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(Error::input(format!(
                "step function needs matching nonempty breakpoints and values (got {} and {})",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::input("step function breakpoints must start at 0"));
        }
        if breakpoints.iter().any(|b| !b.is_finite())
            || breakpoints.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::input(
                "step function breakpoints must be finite and strictly increasing",
            ));
        }
        Ok(IntegerStepFunction {
            breakpoints,
            values,
        })
    }

    pub fn constant(v: i64) -> Self {
        IntegerStepFunction {
            breakpoints: vec![0.0],
            values: vec![v],
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> i64 {
        let i = self
            .breakpoints
            .partition_point(|&b| b <= x)
            .saturating_sub(1);
        self.values[i]
    }
}

/// Output of the backward recursion: the price function and optimal
/// strategy at every date.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PricingTable {
    #[serde(rename = "n")]
    pub n_units: u64,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub model: SupportModel,
    /// `prices[t]` for `t = 0..=T`; `prices[T]` is `n` times the payoff.
    pub prices: Vec<PiecewiseAffine>,
    /// `strategies[t]` for `t = 0..T`: shares held over `(t, t+1]`.
    pub strategies: Vec<IntegerStepFunction>,
}

impl PricingTable {
    /// `prices[0](s)`.
    pub fn initial_price(&self, s: f64) -> Result<f64> {
        self.prices[0].eval(s)
    }

    /// The payoff per unit, recovered from `prices[T] / n`.
    pub fn unit_payoff(&self) -> PiecewiseAffine {
        self.prices[self.horizon].scale(1.0 / self.n_units as f64)
    }
}

/// `(k_down s ∨ a) ∧ k_up s`, the projection of a knot into the window.
/// `a = +∞` clamps to the upper end.
pub fn clamped_knot(a: f64, s: f64, k_down: f64, k_up: f64) -> Result<f64> {
    check_spot(s)?;
    check_support(k_down, k_up)?;
    if a.is_nan() || a < 0.0 {
        return Err(Error::domain(format!("knot must be nonnegative, got {a}")));
    }
    Ok(a.max(k_down * s).min(k_up * s))
}

/// Integers `θ` with `-L-1 ≤ θ ≤ L+1`, `L` the Lipschitz constant of `g_next`.
pub fn theta_range(g_next: &PiecewiseAffine) -> std::ops::RangeInclusive<i64> {
    let l = g_next.lipschitz();
    let lo = (-l - 1.0).ceil() as i64;
    let hi = (l + 1.0).floor() as i64;
    lo..=hi
}

/// Candidate abscissae for the supremum over the window: both endpoints and
/// every knot inside.
pub(crate) fn window_candidates(g: &PiecewiseAffine, s: f64, k_down: f64, k_up: f64) -> Vec<f64> {
    let (lo, hi) = (k_down * s, k_up * s);
    let mut xs = Vec::with_capacity(4);
    xs.push(lo);
    xs.extend(
        g.breakpoints()
            .iter()
            .map(|&a| a.max(lo).min(hi))
            .filter(|&x| x > lo && x < hi),
    );
    xs.push(hi);
    xs
}

/// Cost of super-hedging `g_next` over one step from spot `s` while holding
/// `theta` shares.
pub fn one_step_value(
    g_next: &PiecewiseAffine,
    k_down: f64,
    k_up: f64,
    s: f64,
    theta: i64,
) -> Result<f64> {
    check_support(k_down, k_up)?;
    check_spot(s)?;
    Ok(value_for(
        g_next,
        &window_candidates(g_next, s, k_down, k_up),
        s,
        theta,
    ))
}

fn value_for(g: &PiecewiseAffine, candidates: &[f64], s: f64, theta: i64) -> f64 {
    let th = theta as f64;
    candidates
        .iter()
        .map(|&x| g.value_at(x) - th * x)
        .fold(f64::NEG_INFINITY, f64::max)
        + th * s
}

/// Minimal one-step cost over integer share counts and the smallest
/// minimizing count.
pub fn one_step_optimal(
    g_next: &PiecewiseAffine,
    k_down: f64,
    k_up: f64,
    s: f64,
) -> Result<(f64, i64)> {
    check_support(k_down, k_up)?;
    check_spot(s)?;
    let candidates = window_candidates(g_next, s, k_down, k_up);
    let values: Vec<(i64, f64)> = theta_range(g_next)
        .map(|th| (th, value_for(g_next, &candidates, s, th)))
        .collect();
    let best = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    let &(theta, value) = values
        .iter()
        .find(|(_, v)| *v <= best + 0.1 * tolerance(best))
        .expect("nonempty theta range");
    Ok((value, theta))
}

/// Shared per-step data for the functional operator.
struct StepGeometry {
    k_down: f64,
    k_up: f64,
    /// Interval starts of the common refinement: 0, `a_i / k_up`, `a_i / k_down`.
    events: Vec<f64>,
    /// `g(k_down s)` and `g(k_up s)` as functions of `s`.
    low: PiecewiseAffine,
    high: PiecewiseAffine,
    knots: Vec<f64>,
    knot_values: Vec<f64>,
}

impl StepGeometry {
    fn new(g: &PiecewiseAffine, k_down: f64, k_up: f64) -> Result<Self> {
        let knots: Vec<f64> = g.breakpoints()[1..].to_vec();
        let knot_values = knots.iter().map(|&a| g.value_at(a)).collect();
        let mut events = Vec::with_capacity(2 * knots.len() + 1);
        events.push(0.0);
        for &a in &knots {
            events.push(a / k_up);
            events.push(a / k_down);
        }
        events.sort_by(f64::total_cmp);
        events.dedup();
        Ok(StepGeometry {
            k_down,
            k_up,
            events,
            low: g.affine_image(k_down, 1.0, 0.0)?,
            high: g.affine_image(k_up, 1.0, 0.0)?,
            knots,
            knot_values,
        })
    }

    /// `s ↦ V(θ, s)` as a labelled piecewise-affine curve.
    fn theta_curve(&self, theta: i64) -> Result<Labeled> {
        let th = theta as f64;
        let low_shift = Affine::new(th * (1.0 - self.k_down), 0.0);
        let high_shift = Affine::new(th * (1.0 - self.k_up), 0.0);
        let phi: Vec<f64> = self
            .knots
            .iter()
            .zip(&self.knot_values)
            .map(|(&a, &ga)| ga - th * a)
            .collect();
        let mut window = SlidingMax::new(&phi);
        let (mut lo, mut hi) = (0usize, 0usize);
        let (mut ip, mut iq) = (0usize, 0usize);
        let (lb, hb) = (self.low.breakpoints(), self.high.breakpoints());
        let mut out = Builder::with_capacity(self.events.len() + 4);
        let mut lines = [Affine::ZERO; 3];

        for (e, &u) in self.events.iter().enumerate() {
            let v = self.events.get(e + 1).copied().unwrap_or(f64::INFINITY);
            while ip + 1 < lb.len() && lb[ip + 1] <= u {
                ip += 1;
            }
            while iq + 1 < hb.len() && hb[iq + 1] <= u {
                iq += 1;
            }
            lines[0] = plus(self.low.pieces()[ip], low_shift);
            lines[1] = plus(self.high.pieces()[iq], high_shift);
            let mut count = 2;
            if v.is_finite() {
                // Knots strictly inside the window for every s in (u, v).
                let m = 0.5 * (u + v);
                while hi < self.knots.len() && self.knots[hi] < self.k_up * m {
                    hi += 1;
                }
                while lo < hi && self.knots[lo] <= self.k_down * m {
                    lo += 1;
                }
                if let Some(k) = window.advance(lo, hi) {
                    lines[2] = Affine::new(th, phi[k]);
                    count = 3;
                }
            }
            push_upper_envelope(&mut out, &lines[..count], u, v, theta);
        }
        out.finish(true)
    }
}

fn plus(a: Affine, b: Affine) -> Affine {
    Affine::new(a.slope + b.slope, a.intercept + b.intercept)
}

/// One backward step as functions of the spot: the price `g_prev` and the
/// optimal integer strategy.
pub fn one_step_function(
    g_next: &PiecewiseAffine,
    k_down: f64,
    k_up: f64,
) -> Result<(PiecewiseAffine, IntegerStepFunction)> {
    check_support(k_down, k_up)?;
    let geometry = StepGeometry::new(g_next, k_down, k_up)?;
    let thetas: Vec<i64> = theta_range(g_next).collect();
    let curves = par::try_map(&thetas, |&th| geometry.theta_curve(th))?;
    let envelope = pwa::reduce(curves, Envelope::Lower, true)?;
    let (breakpoints, values) = envelope.label_steps();
    Ok((
        envelope.to_function(),
        IntegerStepFunction::new(breakpoints, values)?,
    ))
}

/// Backward recursion from `n_units * payoff` at the horizon to date zero.
pub fn backward_price(
    payoff: &PiecewiseAffine,
    n_units: u64,
    model: &SupportModel,
) -> Result<PricingTable> {
    if n_units == 0 {
        return Err(Error::input("the number of claims must be at least 1"));
    }
    let horizon = model.horizon();
    let mut prices = vec![payoff.scale(n_units as f64).normalize()];
    let mut strategies = Vec::with_capacity(horizon);
    for t in (0..horizon).rev() {
        let (k_down, k_up) = model.step(t);
        let (g, theta) = one_step_function(prices.last().expect("nonempty"), k_down, k_up)?;
        prices.push(g);
        strategies.push(theta);
    }
    prices.reverse();
    strategies.reverse();
    Ok(PricingTable {
        n_units,
        horizon,
        model: model.clone(),
        prices,
        strategies,
    })
}

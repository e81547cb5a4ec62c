//! The super-hedging price when any real number of shares may be held, and
//! a checker for how fast the integer per-unit price approaches it.
//!
//! Over one step with real `θ` the price at `s` is the smallest value at `s`
//! of a line lying above `g` on the window, i.e. the concave envelope of `g`
//! on `[k_down s, k_up s]` evaluated at `s`. The scalar operator computes it
//! for any piecewise-affine `g`. As a function of `s` that envelope is only
//! piecewise affine when `g` is convex (the endpoint chord wins everywhere)
//! or concave (`g` itself), so the functional recursion handles those two
//! shapes and reports other payoffs as unsupported.
//!
//! With `n` claims and integer strategies, rounding `n θ` costs at most one
//! share per step, which gives
//!
//! ```text
//! ĝ(x) ≤ g(x, n) / n ≤ ĝ(x) + 2 T M / n
//! ```
//!
//! whenever the spot stays below `M`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::pricer::{self, backward_price, check_spot, check_support, SupportModel};
use crate::pwa::PiecewiseAffine;

/// One-step price with real-valued strategies at spot `s`.
pub fn real_one_step(g_next: &PiecewiseAffine, k_down: f64, k_up: f64, s: f64) -> Result<f64> {
    check_support(k_down, k_up)?;
    check_spot(s)?;
    let xs = pricer::window_candidates(g_next, s, k_down, k_up);
    let ys: Vec<f64> = xs.iter().map(|&x| g_next.value_at(x)).collect();
    let cost = |theta: f64| {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| y + theta * (s - x))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    // The cost is convex and piecewise linear in θ with kinks where two
    // candidate lines cross, i.e. at chord slopes of g.
    let mut best = f64::INFINITY;
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            if xs[j] > xs[i] {
                best = best.min(cost((ys[j] - ys[i]) / (xs[j] - xs[i])));
            }
        }
    }
    Ok(best)
}

/// One backward step with real-valued strategies, for convex or concave
/// `g_next`.
pub fn real_one_step_function(
    g_next: &PiecewiseAffine,
    k_down: f64,
    k_up: f64,
) -> Result<PiecewiseAffine> {
    check_support(k_down, k_up)?;
    if g_next.is_concave() {
        return Ok(g_next.clone());
    }
    if !g_next.is_convex() {
        return Err(Error::Unsupported(
            "the real-strategy price of a payoff that is neither convex nor concave \
             is not piecewise affine"
                .into(),
        ));
    }
    let q_up = (1.0 - k_down) / (k_up - k_down);
    let q_down = 1.0 - q_up;
    let low = g_next.affine_image(k_down, q_down, 0.0)?;
    let high = g_next.affine_image(k_up, q_up, 0.0)?;
    Ok(low.add(&high).normalize())
}

/// `ĝ(t, ·)` for `t = 0..=T`, with `result[T] = payoff`.
pub fn real_backward_price(
    payoff: &PiecewiseAffine,
    model: &SupportModel,
) -> Result<Vec<PiecewiseAffine>> {
    let mut prices = vec![payoff.normalize()];
    for t in (0..model.horizon()).rev() {
        let (k_down, k_up) = model.step(t);
        let g = real_one_step_function(prices.last().expect("nonempty"), k_down, k_up)?;
        prices.push(g);
    }
    prices.reverse();
    Ok(prices)
}

/// `S0_max * ∏ k_up[t]`, the largest spot reachable from `[0, s0_max]`.
pub fn default_domain_cap(s0_max: f64, model: &SupportModel) -> f64 {
    s0_max * model.total_up()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: u64,
    /// `max_x |g(x, n) / n - ĝ(x)|` over the audit grid.
    pub max_gap: f64,
    pub lower_violation: f64,
    pub upper_violation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub n_values: Vec<u64>,
    pub horizon: usize,
    /// Largest `(ĝ - g_n / n)^+` over all `n` and audit points.
    pub max_lower_violation: f64,
    /// Largest `(g_n / n - ĝ - 2TM / n)^+`.
    pub max_upper_violation: f64,
    /// `2 T M`.
    pub bound_constant: f64,
    pub domain_cap: f64,
    pub audit_points: usize,
    pub rows: Vec<ConvergenceRow>,
}

pub const AUDIT_POINTS: usize = 500;

/// Equally spaced points strictly inside `(0, M / ∏ k_up)`, so that every
/// path started there stays below `M`.
pub fn audit_grid(model: &SupportModel, domain_cap: f64) -> Vec<f64> {
    let top = domain_cap / model.total_up();
    (1..=AUDIT_POINTS)
        .map(|i| top * i as f64 / (AUDIT_POINTS + 1) as f64)
        .collect()
}

/// Checks `ĝ ≤ g_n / n ≤ ĝ + 2TM/n` for each `n` on the audit grid.
pub fn check_convergence(
    payoff: &PiecewiseAffine,
    model: &SupportModel,
    n_values: &[u64],
    domain_cap: f64,
) -> Result<ConvergenceReport> {
    if !(domain_cap > 0.0 && domain_cap.is_finite()) {
        return Err(Error::input(format!(
            "domain cap M must be positive and finite, got {domain_cap}"
        )));
    }
    if n_values.is_empty() {
        return Err(Error::input("at least one n is required"));
    }
    if n_values.contains(&0) {
        return Err(Error::input("n must be at least 1"));
    }
    let real = real_backward_price(payoff, model)?;
    let xs = audit_grid(model, domain_cap);
    let reference: Vec<f64> = xs.iter().map(|&x| real[0].value_at(x)).collect();
    let horizon = model.horizon();
    let bound_constant = 2.0 * horizon as f64 * domain_cap;

    let tables = par::try_map(n_values, |&n| backward_price(payoff, n, model))?;
    let rows: Vec<ConvergenceRow> = n_values
        .iter()
        .zip(&tables)
        .map(|(&n, table)| {
            let slack = bound_constant / n as f64;
            let mut row = ConvergenceRow {
                n,
                max_gap: 0.0,
                lower_violation: 0.0,
                upper_violation: 0.0,
            };
            for (&x, &g_hat) in xs.iter().zip(&reference) {
                let per_unit = table.prices[0].value_at(x) / n as f64;
                row.max_gap = row.max_gap.max((per_unit - g_hat).abs());
                row.lower_violation = row.lower_violation.max(g_hat - per_unit);
                row.upper_violation = row.upper_violation.max(per_unit - g_hat - slack);
            }
            row
        })
        .collect();

    Ok(ConvergenceReport {
        n_values: n_values.to_vec(),
        horizon,
        max_lower_violation: rows.iter().map(|r| r.lower_violation).fold(0.0, f64::max),
        max_upper_violation: rows.iter().map(|r| r.upper_violation).fold(0.0, f64::max),
        bound_constant,
        domain_cap,
        audit_points: xs.len(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricer::one_step_optimal;

    fn call() -> PiecewiseAffine {
        PiecewiseAffine::call(500.0).unwrap()
    }

    #[test]
    fn real_one_step_examples() {
        let g = call();
        assert!((real_one_step(&g, 0.9, 1.2, 500.0).unwrap() - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(real_one_step(&g, 0.9, 1.2, 400.0).unwrap(), 0.0);
        assert!((real_one_step(&g, 0.9, 1.2, 600.0).unwrap() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn real_one_step_is_concave_envelope_for_mixed_payoff() {
        // Butterfly: neither convex nor concave. At s = 100 the window is
        // [90, 120] and the envelope is the chord from the peak at 100.
        let g = PiecewiseAffine::from_knots(
            &[(0.0, 0.0), (90.0, 0.0), (100.0, 10.0), (110.0, 0.0)],
            0.0,
        )
        .unwrap();
        assert!((real_one_step(&g, 0.9, 1.2, 100.0).unwrap() - 10.0).abs() < 1e-12);
        assert!(real_one_step_function(&g, 0.9, 1.2).is_err());
    }

    #[test]
    fn functional_matches_scalar_for_convex_and_concave() {
        let convex =
            PiecewiseAffine::from_knots(&[(0.0, 40.0), (40.0, 0.0), (60.0, 0.0)], 2.0).unwrap();
        let concave = PiecewiseAffine::from_knots(&[(0.0, 0.0), (50.0, 50.0)], 0.25).unwrap();
        for g in [
            convex,
            concave,
            call(),
            PiecewiseAffine::put(500.0).unwrap(),
        ] {
            let f = real_one_step_function(&g, 0.8, 1.1).unwrap();
            for i in 1..400 {
                let s = i as f64 * 2.0;
                let want = real_one_step(&g, 0.8, 1.1, s).unwrap();
                assert!(
                    (f.value_at(s) - want).abs() <= 1e-9 * want.abs().max(1.0),
                    "s = {s}"
                );
            }
        }
    }

    #[test]
    fn real_price_is_a_relaxation() {
        let g = call().scale(3.0);
        for i in 1..200 {
            let s = i as f64 * 5.0;
            let real = real_one_step(&g, 0.9, 1.2, s).unwrap();
            let (int, _) = one_step_optimal(&g, 0.9, 1.2, s).unwrap();
            assert!(real <= int + 1e-9 * int.max(1.0));
        }
    }

    #[test]
    fn backward_examples() {
        let model = SupportModel::constant(0.9, 1.2, 1).unwrap();
        let prices = real_backward_price(&call(), &model).unwrap();
        assert!((prices[0].value_at(500.0) - 100.0 / 3.0).abs() < 1e-12);
        let zero = real_backward_price(
            &PiecewiseAffine::zero(),
            &SupportModel::constant(0.9, 1.2, 3).unwrap(),
        )
        .unwrap();
        assert!(zero
            .iter()
            .all(|f| f.lipschitz() == 0.0 && f.value_at(1.0) == 0.0));
    }

    #[test]
    fn convergence_examples() {
        let model = SupportModel::constant(0.9, 1.2, 1).unwrap();
        let report = check_convergence(&call(), &model, &[1, 100], 1200.0).unwrap();
        assert_eq!(report.bound_constant, 2400.0);
        assert_eq!(report.audit_points, 500);
        assert!(report.max_lower_violation <= 1e-9 * 1200.0);
        assert_eq!(report.max_upper_violation, 0.0);
        assert!(report.rows[1].max_gap <= 2400.0 / 100.0 + 1e-6);

        let zero = check_convergence(&PiecewiseAffine::zero(), &model, &[1, 5], 1200.0).unwrap();
        assert_eq!(zero.max_lower_violation, 0.0);
        assert_eq!(zero.max_upper_violation, 0.0);
    }

    #[test]
    fn convergence_rejects_bad_input() {
        let model = SupportModel::constant(0.9, 1.2, 1).unwrap();
        assert!(check_convergence(&call(), &model, &[1], 0.0).is_err());
        assert!(check_convergence(&call(), &model, &[], 10.0).is_err());
        assert!(check_convergence(&call(), &model, &[0], 10.0).is_err());
    }
}

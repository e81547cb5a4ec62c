mod common;

use common::{band, close, payoff, samples};
use inthedge_core::call_analytic::{closed_form, CallOneStepParams, Region};
use inthedge_core::grid::{grid_backward_price, GridSpec};
use inthedge_core::pricer::{one_step_optimal, one_step_value};
use inthedge_core::real_oracle::{real_backward_price, real_one_step, real_one_step_function};
use inthedge_core::{backward_price, Error, PiecewiseAffine, SupportModel};
use proptest::prelude::*;
use proptest::test_runner::Config;

/// Concave envelope at `s` of the payoff's graph over the window, by
/// interpolating every pair of candidate points that straddles `s`.
fn envelope_at(g: &PiecewiseAffine, k_down: f64, k_up: f64, s: f64) -> f64 {
    let (lo, hi) = (k_down * s, k_up * s);
    let xs: Vec<f64> = g
        .breakpoints()
        .iter()
        .copied()
        .filter(|&b| b > lo && b < hi)
        .chain([lo, hi, s])
        .collect();
    let mut best = f64::NEG_INFINITY;
    for &a in xs.iter().filter(|&&a| a <= s) {
        for &b in xs.iter().filter(|&&b| b >= s) {
            let v = if b > a {
                g.value_at(a) + (g.value_at(b) - g.value_at(a)) * (s - a) / (b - a)
            } else {
                g.value_at(s)
            };
            best = best.max(v);
        }
    }
    best
}

fn calls() -> impl Strategy<Value = PiecewiseAffine> {
    prop::collection::vec((10.0..200.0f64, 0.1..3.0f64), 1..4).prop_map(|legs| {
        legs.iter()
            .map(|&(k, w)| PiecewiseAffine::call(k).unwrap().scale(w))
            .reduce(|a, b| a.add(&b))
            .unwrap()
    })
}

proptest! {
    #![proptest_config(Config::with_cases(200))]

    #[test]
    fn call_closed_form_matches_pricer(strike in 50.0..150.0f64, n in 1u64..30, (kd, ku) in band(), spot in 20.0..250.0f64) {
        let p = CallOneStepParams::new(strike, n, kd, ku, spot).unwrap();
        let (value, theta) = closed_form(&p);
        let g = PiecewiseAffine::call(strike).unwrap().scale(n as f64);
        let (want, _) = one_step_optimal(&g, kd, ku, spot).unwrap();
        prop_assert!(close(value, want, 1e-9), "{:?}: {} vs {}", p, value, want);
        prop_assert!(close(one_step_value(&g, kd, ku, spot, theta).unwrap(), want, 1e-9));
        match p.region() {
            Region::Low => prop_assert_eq!((value, theta), (0.0, 0)),
            Region::High => prop_assert_eq!(theta, n as i64),
            Region::Middle => prop_assert!((0..=n as i64).contains(&theta)),
        }
    }
}

proptest! {
    #![proptest_config(Config::with_cases(64))]

    #[test]
    fn real_one_step_is_the_concave_envelope(g in payoff(5), (kd, ku) in band()) {
        for i in 1..=100 {
            let s = 300.0 * i as f64 / 100.0;
            let want = envelope_at(&g, kd, ku, s);
            prop_assert!(close(real_one_step(&g, kd, ku, s).unwrap(), want, 1e-9), "s = {}", s);
        }
    }

    #[test]
    fn convex_real_step_matches_scalar(g in calls(), (kd, ku) in band()) {
        let f = real_one_step_function(&g, kd, ku).unwrap();
        for s in samples(&f, 300.0).into_iter().filter(|&s| s > 0.0) {
            prop_assert!(close(f.value_at(s), real_one_step(&g, kd, ku, s).unwrap(), 1e-9), "s = {}", s);
        }
    }

    #[test]
    fn concave_real_step_is_the_payoff(ys in prop::collection::vec(0.0..5.0f64, 4), (kd, ku) in band()) {
        // Decreasing nonnegative slopes.
        let mut slopes = ys.clone();
        slopes.sort_by(|a, b| b.total_cmp(a));
        let mut knots = vec![(0.0, 0.0)];
        for (i, m) in slopes[..3].iter().enumerate() {
            let (x, y) = knots[i];
            knots.push((x + 30.0, y + 30.0 * m));
        }
        let g = PiecewiseAffine::from_knots(&knots, slopes[3]).unwrap();
        let f = real_one_step_function(&g, kd, ku).unwrap();
        for i in 1..=100 {
            let s = 200.0 * i as f64 / 100.0;
            prop_assert!(close(f.value_at(s), real_one_step(&g, kd, ku, s).unwrap(), 1e-9));
        }
    }

    #[test]
    fn per_unit_prices_bracket_the_real_price(g in calls(), (kd, ku) in band(), n in 1u64..20) {
        let model = SupportModel::constant(kd, ku, 2).unwrap();
        let real = real_backward_price(&g, &model).unwrap();
        let table = backward_price(&g, n, &model).unwrap();
        for i in 1..=100 {
            let s = 200.0 * i as f64 / 100.0;
            let per_unit = table.prices[0].value_at(s) / n as f64;
            let r = real[0].value_at(s);
            prop_assert!(per_unit >= r - 1e-9 * r.max(1.0));
            // Rounding θ costs at most one share's move per step.
            let reach = s * ku * ku;
            prop_assert!(per_unit <= r + 2.0 * 2.0 * reach / n as f64 + 1e-9 * r.max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(Config::with_cases(16))]

    #[test]
    fn grid_stays_within_its_bound(g in payoff(4), (kd, ku) in band()) {
        let model = SupportModel::constant(kd, ku, 2).unwrap();
        let exact = backward_price(&g, 1, &model).unwrap();
        let grid = grid_backward_price(&g, 1, &model, &GridSpec::new(0.1, 150.0).unwrap()).unwrap();
        let bound = g.lipschitz() * 2.0 * 0.1 + 1e-9;
        for (i, &p) in grid.prices[0].iter().enumerate() {
            let x = grid.node(i);
            prop_assert!((p - exact.prices[0].value_at(x)).abs() <= bound, "x = {}", x);
        }
    }
}

#[test]
fn real_price_of_a_butterfly_is_unsupported() {
    let g =
        PiecewiseAffine::from_knots(&[(0.0, 0.0), (90.0, 0.0), (100.0, 10.0), (110.0, 0.0)], 0.0)
            .unwrap();
    let model = SupportModel::constant(0.9, 1.2, 1).unwrap();
    assert!(matches!(
        real_backward_price(&g, &model),
        Err(Error::Unsupported(_))
    ));
}

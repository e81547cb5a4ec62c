//! Acceptance checks for `inthedge-core`. Each `criterion_*` function runs
//! one check end to end and reports whether it met its tolerance.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use inthedge_core::backtest::run_backtest;
use inthedge_core::calibration::{
    calibrate, split_train_test, CalibrationMode, PricePath, TrainingSet,
};
use inthedge_core::call_analytic::{closed_form, CallOneStepParams};
use inthedge_core::grid::{grid_backward_price, GridSpec};
use inthedge_core::pricer::{backward_price, one_step_optimal, theta_range, SupportModel};
use inthedge_core::pwa::{tolerance, PiecewiseAffine};
use inthedge_core::real_oracle::{audit_grid, check_convergence, real_backward_price};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "criterion {} [{}] {} ({:.2} s): {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

fn timed(id: u8, title: &'static str, run: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (passed, detail) = run();
    Outcome {
        id,
        title,
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= tolerance(a.abs().max(b.abs()))
}

fn call(strike: f64) -> PiecewiseAffine {
    PiecewiseAffine::call(strike).expect("positive strike")
}

/// Path of the bundled synthetic daily series.
pub fn synthetic_path_file() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data/synthetic_path.csv")
}

/// Closed-form call prices against the generic one-step optimizer on
/// 10,000 random draws.
pub fn criterion_1() -> Outcome {
    timed(1, "one-step call closed form", || {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut mismatches = 0;
        let mut worst = 0.0f64;
        for _ in 0..10_000 {
            let strike = rng.gen_range(10.0..=1000.0);
            let n = rng.gen_range(1..=20u64);
            let k_down = open(&mut rng, 0.5, 1.0);
            let k_up = open(&mut rng, 1.0, 2.0);
            let s = open(&mut rng, 0.0, 2.0 * strike / k_down);
            let p = CallOneStepParams::new(strike, n, k_down, k_up, s).expect("valid draw");
            let (want, _) = closed_form(&p);
            let (got, _) = one_step_optimal(&call(strike).scale(n as f64), k_down, k_up, s)
                .expect("valid draw");
            worst = worst.max((got - want).abs() / want.abs().max(1.0));
            if !close(got, want) {
                mismatches += 1;
            }
        }
        (
            mismatches == 0,
            format!(
                "{mismatches} of 10000 draws differ beyond 1e-9; worst relative gap {worst:.2e}"
            ),
        )
    })
}

fn open(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    loop {
        let x = rng.gen_range(lo..hi);
        if x > lo {
            return x;
        }
    }
}

/// Flat and intrinsic tails of the one-step call price.
pub fn criterion_2() -> Outcome {
    timed(2, "one-step call regions", || {
        let (low, high) = (500.0 / 1.2, 500.0 / 0.9);
        let model = SupportModel::constant(0.9, 1.2, 1).expect("valid model");
        let mut bad = Vec::new();
        for n in [1u64, 5, 100] {
            let table = backward_price(&call(500.0), n, &model).expect("priced");
            let g = &table.prices[0];
            let low_points = (0..=1000).map(|i| low * i as f64 / 1000.0);
            let high_points = (0..=1000).map(|i| high + (5000.0 - high) * i as f64 / 1000.0);
            let low_ok = low_points
                .clone()
                .all(|s| g.eval(s).unwrap().abs() <= tolerance(0.0));
            let high_ok = high_points
                .clone()
                .all(|s| close(g.eval(s).unwrap(), n as f64 * (s - 500.0)));
            if !(low_ok && high_ok) {
                bad.push(n);
            }
        }
        (
            bad.is_empty(),
            if bad.is_empty() {
                "zero below K/k_up and n(s-K) above K/k_down for n in {1,5,100}".into()
            } else {
                format!("tails wrong for n in {bad:?}")
            },
        )
    })
}

/// `min_θ max_x (g(x) - θx) + θs` over a dense window grid plus knots,
/// with a generous `θ` range.
fn brute_one_step(g: &PiecewiseAffine, k_down: f64, k_up: f64, s: f64) -> f64 {
    let (lo, hi) = (k_down * s, k_up * s);
    let mut xs: Vec<f64> = (0..=20_000)
        .map(|i| lo + (hi - lo) * i as f64 / 20_000.0)
        .collect();
    xs.extend(
        g.breakpoints()
            .iter()
            .copied()
            .filter(|&a| a > lo && a < hi),
    );
    let l = theta_range(g);
    (l.start() - 5..=l.end() + 5)
        .map(|th| {
            let th = th as f64;
            xs.iter()
                .map(|&x| g.value_at(x) - th * x)
                .fold(f64::NEG_INFINITY, f64::max)
                + th * s
        })
        .fold(f64::INFINITY, f64::min)
}

/// Worked values at the money.
pub fn criterion_3() -> Outcome {
    timed(3, "worked point values", || {
        let model = SupportModel::constant(0.9, 1.2, 1).expect("valid model");
        let g1 = backward_price(&call(500.0), 1, &model)
            .expect("priced")
            .prices[0]
            .value_at(500.0);
        let g5 = backward_price(&call(500.0), 5, &model)
            .expect("priced")
            .prices[0]
            .value_at(500.0);
        let b1 = brute_one_step(&call(500.0), 0.9, 1.2, 500.0);
        let b5 = brute_one_step(&call(500.0).scale(5.0), 0.9, 1.2, 500.0);
        let ok = close(g1, 50.0)
            && close(g5 / 5.0, 40.0)
            && close(b1, g1)
            && close(b5, g5)
            && !close(g5, 5.0 * g1);
        (
            ok,
            format!(
                "g(500,1) = {g1} (brute {b1}), g(500,5)/5 = {} (brute {}), 5 g(500,1) = {}",
                g5 / 5.0,
                b5 / 5.0,
                5.0 * g1
            ),
        )
    })
}

/// Integer per-unit prices between the real-strategy price and its bound.
pub fn criterion_4() -> Outcome {
    timed(4, "convergence bounds", || {
        let ns = [1u64, 2, 5, 10, 50, 100];
        let mut ok = true;
        let mut lines = Vec::new();
        for horizon in [1usize, 2, 5] {
            let model = SupportModel::constant(0.9, 1.2, horizon).expect("valid model");
            let cap = 1000.0 * 1.2f64.powi(horizon as i32);
            let report = check_convergence(&call(500.0), &model, &ns, cap).expect("checked");
            let gaps: Vec<f64> = report.rows.iter().map(|r| r.max_gap).collect();
            let monotone = gaps.windows(2).all(|w| w[1] <= w[0] + tolerance(w[0]));
            let bounded = report.max_lower_violation <= 1e-6 && report.max_upper_violation <= 1e-6;
            ok &= monotone && bounded;
            lines.push(format!(
                "T={horizon}: lower {:.1e}, upper {:.1e}, max gaps {:?}{}",
                report.max_lower_violation,
                report.max_upper_violation,
                gaps.iter().map(|g| format!("{g:.4}")).collect::<Vec<_>>(),
                if monotone { "" } else { " NOT non-increasing" }
            ));
        }
        (ok, lines.join("; "))
    })
}

/// Per-unit price non-increasing in `n`.
pub fn criterion_5() -> Outcome {
    timed(5, "per-unit price non-increasing in n", || {
        let ns = [1u64, 3, 5, 7, 10, 100];
        let mut violations = 0;
        let mut audited = 0;
        let mut worst: Option<(usize, f64, u64, u64, f64, f64)> = None;
        for horizon in [1usize, 3] {
            let model = SupportModel::constant(0.9, 1.2, horizon).expect("valid model");
            let xs = audit_grid(&model, 1000.0 * 1.2f64.powi(horizon as i32));
            let tables: Vec<_> = ns
                .iter()
                .map(|&n| backward_price(&call(500.0), n, &model).expect("priced"))
                .collect();
            for &x in &xs {
                audited += 1;
                let per_unit: Vec<f64> = tables
                    .iter()
                    .zip(ns)
                    .map(|(t, n)| t.prices[0].value_at(x) / n as f64)
                    .collect();
                let mut hit = false;
                for k in 1..ns.len() {
                    let (a, b) = (per_unit[k - 1], per_unit[k]);
                    if b > a + tolerance(a) {
                        hit = true;
                        if worst.is_none_or(|w| b - a > w.5 - w.4) {
                            worst = Some((horizon, x, ns[k - 1], ns[k], a, b));
                        }
                    }
                }
                violations += hit as usize;
            }
        }
        let detail = match worst {
            None => format!("non-increasing at all {audited} audit points"),
            Some((t, x, n0, n1, a, b)) => format!(
                "{violations} of {audited} audit points increase; largest at T={t}, x={x:.3}: \
                 g/n = {a:.6} for n={n0} but {b:.6} for n={n1}"
            ),
        };
        (violations == 0, detail)
    })
}

/// Pathwise super-hedge on random in-support paths.
pub fn criterion_6() -> Outcome {
    timed(6, "super-hedging guarantee on in-support paths", || {
        let horizon = 10;
        let model = SupportModel::constant(0.9, 1.2, horizon).expect("valid model");
        let butterfly = PiecewiseAffine::from_knots(
            &[(0.0, 0.0), (400.0, 0.0), (500.0, 100.0), (600.0, 0.0)],
            0.0,
        )
        .expect("valid knots");
        let cases = [(call(500.0), 1u64), (call(500.0), 5), (butterfly, 3)];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut ok = true;
        let mut lines = Vec::new();
        for (payoff, n) in cases {
            let table = backward_price(&payoff, n, &model).expect("priced");
            let paths: Vec<PricePath> = (0..1000)
                .map(|_| {
                    let mut s = rng.gen_range(250.0..=1000.0);
                    let mut prices = vec![s];
                    for _ in 0..horizon {
                        s *= rng.gen_range(0.9..=1.2);
                        prices.push(s);
                    }
                    PricePath::undated(prices).expect("positive prices")
                })
                .collect();
            let report = run_backtest(&table, &TrainingSet::new(paths).expect("paths"), 20)
                .expect("replayed");
            let shortfalls = report
                .paths
                .iter()
                .filter(|p| p.terminal_wealth < p.payoff - 1e-6 * p.terminal_spot.max(1.0))
                .count();
            let min_error = report.all.min.expect("nonempty");
            ok &= shortfalls == 0 && min_error >= -1e-4 && report.breached == 0;
            lines.push(format!(
                "n={n}, L={}: {shortfalls} shortfalls, min eps_T {min_error:.3e}%",
                payoff.lipschitz()
            ));
        }
        (ok, lines.join("; "))
    })
}

fn random_payoff(rng: &mut ChaCha8Rng) -> PiecewiseAffine {
    let mut xs: Vec<f64> = (0..3).map(|_| rng.gen_range(20.0..250.0)).collect();
    xs.sort_by(f64::total_cmp);
    let mut knots = vec![(0.0, rng.gen_range(0.0..100.0))];
    knots.extend(xs.into_iter().map(|x| (x, rng.gen_range(0.0..100.0))));
    PiecewiseAffine::from_knots(&knots, rng.gen_range(-1.0..2.0)).expect("increasing knots")
}

/// Grid backend against the exact backend, and first-order refinement.
pub fn criterion_7() -> Outcome {
    timed(7, "exact and grid backends agree", || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s0_max = 200.0;
        let mut within_bound = true;
        let mut coarse_max = 0.0f64;
        let mut fine_max = 0.0f64;
        let mut worst_ratio = 0.0f64;
        for horizon in 1..=3usize {
            for _ in 0..10 {
                let payoff = random_payoff(&mut rng);
                let k_down: Vec<f64> = (0..horizon).map(|_| rng.gen_range(0.85..0.95)).collect();
                let k_up: Vec<f64> = (0..horizon).map(|_| rng.gen_range(1.05..1.2)).collect();
                let model = SupportModel::new(k_down, k_up).expect("valid model");
                let exact = backward_price(&payoff, 1, &model).expect("priced");
                let coarse =
                    grid_backward_price(&payoff, 1, &model, &GridSpec::new(0.1, s0_max).unwrap())
                        .unwrap();
                let fine =
                    grid_backward_price(&payoff, 1, &model, &GridSpec::new(0.05, s0_max).unwrap())
                        .unwrap();
                let (mut e1, mut e2) = (0.0f64, 0.0f64);
                for i in 0..coarse.prices[0].len() {
                    let want = exact.prices[0].value_at(coarse.node(i));
                    e1 = e1.max((coarse.prices[0][i] - want).abs());
                    e2 = e2.max((fine.prices[0][2 * i] - want).abs());
                }
                let bound = payoff.lipschitz() * horizon as f64 * 0.1;
                within_bound &= e1 <= bound + 1e-9;
                coarse_max = coarse_max.max(e1);
                fine_max = fine_max.max(e2);
                if e1 > 1e-9 {
                    worst_ratio = worst_ratio.max(e2 / e1);
                }
            }
        }
        let halves = fine_max <= 0.5 * 1.2 * coarse_max;
        (
            within_bound && halves,
            format!(
                "step 0.1 within L*T*0.1 on all 30 instances: {within_bound}; max error {coarse_max:.4e} \
                 at step 0.1, {fine_max:.4e} at 0.05 (ratio {:.3}, worst single instance {worst_ratio:.3})",
                fine_max / coarse_max
            ),
        )
    })
}

/// Runtime budgets of both backends.
pub fn criterion_8() -> Outcome {
    timed(8, "performance budget", || {
        let start = Instant::now();
        let model = SupportModel::constant(0.9, 1.2, 30).expect("valid model");
        backward_price(&call(500.0), 10, &model).expect("priced");
        let exact = start.elapsed();

        let start = Instant::now();
        let model = SupportModel::constant(0.99, 1.01, 252).expect("valid model");
        let grid = GridSpec::new(0.1, 1000.0).unwrap();
        grid_backward_price(&call(500.0), 1, &model, &grid).expect("priced");
        let gridded = start.elapsed();
        (
            exact < Duration::from_secs(60) && gridded < Duration::from_secs(600),
            format!(
                "exact T=30 n=10: {:.2} s (budget 60 s); grid T=252 step 0.1: {:.2} s (budget 600 s)",
                exact.as_secs_f64(),
                gridded.as_secs_f64()
            ),
        )
    })
}

/// Calibration, pricing, backtest and plot data on the bundled series.
pub fn criterion_9() -> Outcome {
    timed(9, "synthetic end-to-end pipeline", || {
        let horizon = 20;
        let strike = 70.0;
        let full = PricePath::from_csv(&synthetic_path_file()).expect("bundled data");
        let (train, test) = split_train_test(&full, horizon + 1, 2.0 / 3.0).expect("split");
        let calibrated =
            calibrate(&train, CalibrationMode::Pooled, 1e-4, false).expect("calibrated");
        let model = calibrated.model().expect("valid model");
        let ns = [1u64, 5, 10, 15, 20];
        let mut ok = true;
        let mut averages = Vec::new();
        let mut in_support = 0;
        let mut min_error = f64::INFINITY;
        for n in ns {
            let table = backward_price(&call(strike), n, &model).expect("priced");
            let report = run_backtest(&table, &test, 20).expect("replayed");
            in_support = report.in_support.count;
            if let Some(m) = report.in_support.min {
                min_error = min_error.min(m);
            }
            let avg = test
                .periods()
                .iter()
                .map(|p| {
                    100.0 * table.initial_price(p.prices()[0]).expect("positive spot")
                        / (n as f64 * p.prices()[0])
                })
                .sum::<f64>()
                / test.periods().len() as f64;
            averages.push(avg);
        }
        ok &= in_support > 0 && min_error >= -1e-4;

        let mean = averages.iter().sum::<f64>() / averages.len() as f64;
        let sd = (averages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / averages.len() as f64)
            .sqrt();
        let cv = sd / mean;
        ok &= cv < 0.05;

        // Plot data: per-unit curves and the real-strategy curve stay finite.
        let real = real_backward_price(&call(strike), &model).expect("convex payoff");
        let xs: Vec<f64> = (0..=200).map(|i| i as f64).collect();
        ok &= xs.iter().all(|&x| real[0].value_at(x).is_finite());

        (
            ok,
            format!(
                "{} train / {} test periods, {} test periods in support, min in-support eps_T {min_error:.3e}%, \
                 per-unit price averages {:?}% (CV {:.2}%)",
                train.periods().len(),
                test.periods().len(),
                in_support,
                averages.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>(),
                100.0 * cv
            ),
        )
    })
}

pub fn all() -> Vec<fn() -> Outcome> {
    vec![
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
    ]
}

#![allow(dead_code)]

use inthedge_core::PiecewiseAffine;
use proptest::prelude::*;

/// Nonnegative continuous payoff with `knots` knots on `[0, 200]`.
pub fn payoff(knots: usize) -> impl Strategy<Value = PiecewiseAffine> {
    (
        prop::collection::vec(1.0..60.0f64, knots - 1),
        prop::collection::vec(0.0..50.0f64, knots),
        0.0..2.0f64,
    )
        .prop_map(|(gaps, ys, slope)| {
            let mut x = 0.0;
            let mut knots = vec![(0.0, ys[0])];
            for (gap, &y) in gaps.iter().zip(&ys[1..]) {
                x += gap;
                knots.push((x, y));
            }
            PiecewiseAffine::from_knots(&knots, slope).unwrap()
        })
}

/// Arbitrary-sign continuous function, for algebraic identities.
pub fn function() -> impl Strategy<Value = PiecewiseAffine> {
    (
        prop::collection::vec(0.5..40.0f64, 0..6),
        prop::collection::vec(-50.0..50.0f64, 7),
        -3.0..3.0f64,
    )
        .prop_map(|(gaps, ys, slope)| {
            let mut x = 0.0;
            let mut knots = vec![(0.0, ys[0])];
            for (gap, &y) in gaps.iter().zip(&ys[1..]) {
                x += gap;
                knots.push((x, y));
            }
            PiecewiseAffine::from_knots(&knots, slope).unwrap()
        })
}

pub fn band() -> impl Strategy<Value = (f64, f64)> {
    (0.8..0.98f64, 1.02..1.25f64)
}

/// Spots past every knot and a few inside.
pub fn samples(f: &PiecewiseAffine, top: f64) -> Vec<f64> {
    let mut xs: Vec<f64> = (0..=400).map(|i| top * i as f64 / 400.0).collect();
    for &b in f.breakpoints() {
        xs.extend([b, b * 0.999 + 1e-3, b * 1.001 + 1e-3]);
    }
    xs
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

//! Continuous piecewise-affine functions on `[0, ∞)`.
//!
//! A [`PiecewiseAffine`] stores an increasing list of breakpoints starting at
//! zero and one [`Affine`] piece per interval `[b_i, b_{i+1})`; the last piece
//! extends to `+∞`. Every constructor checks continuity at the interior
//! breakpoints, and every operation returns a normalized value: adjacent
//! pieces are distinct and seams are snapped to agree exactly.
//!
//! Tolerances are absolute `1e-9 * max(1, |value|)`; two slopes closer than
//! `1e-12` are treated as parallel.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Relative tolerance of the representation.
pub const REL_TOL: f64 = 1e-9;
/// Slope differences below this are parallel lines.
pub const PARALLEL_SLOPE: f64 = 1e-12;

// Two lines closer than this over an interval are the same line for
// envelope purposes. Kept an order of magnitude below REL_TOL so that seams
// created by picking one of two coincident lines never approach the
// continuity tolerance.
const COINCIDE_REL: f64 = 1e-10;
// Seams with a gap above this are snapped; below it they are left alone so
// normalizing twice is a bit-level no-op.
const SNAP_REL: f64 = 1e-13;
// Pieces narrower than this (relative to their position) are slivers left by
// nearly simultaneous crossings.
const SLIVER_REL: f64 = 1e-11;

/// Absolute tolerance `1e-9 * max(1, |value|)` used for value comparisons.
pub fn tolerance(value: f64) -> f64 {
    REL_TOL * value.abs().max(1.0)
}

fn coincide_tol(value: f64) -> f64 {
    COINCIDE_REL * value.abs().max(1.0)
}

fn parallel(a: f64, b: f64) -> bool {
    (a - b).abs() <= PARALLEL_SLOPE * a.abs().max(b.abs()).max(1.0)
}

/// The affine map `x ↦ slope * x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub slope: f64,
    pub intercept: f64,
}

impl Affine {
    pub const ZERO: Affine = Affine {
        slope: 0.0,
        intercept: 0.0,
    };

    pub fn new(slope: f64, intercept: f64) -> Self {
        Affine { slope, intercept }
    }

    /// The line of the given slope through `(x, y)`.
    pub fn through(x: f64, y: f64, slope: f64) -> Self {
        Affine {
            slope,
            intercept: y - slope * x,
        }
    }

    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    pub fn is_finite(self) -> bool {
        self.slope.is_finite() && self.intercept.is_finite()
    }

    /// Abscissa where the two lines meet, computed relative to the reference
    /// point `x0` to limit cancellation. `None` for parallel lines.
    pub fn crossing_near(self, other: Affine, x0: f64) -> Option<f64> {
        if parallel(self.slope, other.slope) {
            return None;
        }
        let gap = self.eval(x0) - other.eval(x0);
        Some(x0 - gap / (self.slope - other.slope))
    }

    fn plus(self, other: Affine) -> Affine {
        Affine {
            slope: self.slope + other.slope,
            intercept: self.intercept + other.intercept,
        }
    }
}

/// A continuous piecewise-affine function on `[0, ∞)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PwaRepr", into = "PwaRepr")]
pub struct PiecewiseAffine {
    breakpoints: Vec<f64>,
    pieces: Vec<Affine>,
}

#[derive(Serialize, Deserialize)]
struct PwaRepr {
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
    intercepts: Vec<f64>,
}

impl TryFrom<PwaRepr> for PiecewiseAffine {
    type Error = Error;

    fn try_from(repr: PwaRepr) -> Result<Self> {
        if repr.slopes.len() != repr.breakpoints.len()
            || repr.intercepts.len() != repr.breakpoints.len()
        {
            return Err(Error::input(format!(
                "breakpoints, slopes and intercepts must have equal lengths (got {}, {}, {})",
                repr.breakpoints.len(),
                repr.slopes.len(),
                repr.intercepts.len()
            )));
        }
        let pieces = repr
            .slopes
            .iter()
            .zip(&repr.intercepts)
            .map(|(&m, &q)| Affine::new(m, q))
            .collect();
        PiecewiseAffine::new(repr.breakpoints, pieces)
    }
}

impl From<PiecewiseAffine> for PwaRepr {
    fn from(f: PiecewiseAffine) -> Self {
        PwaRepr {
            slopes: f.pieces.iter().map(|p| p.slope).collect(),
            intercepts: f.pieces.iter().map(|p| p.intercept).collect(),
            breakpoints: f.breakpoints,
        }
    }
}

fn validate(breakpoints: &[f64], pieces: &[Affine]) -> Result<()> {
    if breakpoints.is_empty() {
        return Err(Error::input(
            "a piecewise-affine function needs at least one piece",
        ));
    }
    if breakpoints.len() != pieces.len() {
        return Err(Error::input(format!(
            "{} breakpoints but {} pieces",
            breakpoints.len(),
            pieces.len()
        )));
    }
    if breakpoints[0] != 0.0 {
        return Err(Error::input(format!(
            "first breakpoint must be 0, got {}",
            breakpoints[0]
        )));
    }
    if let Some(b) = breakpoints.iter().find(|b| !b.is_finite()) {
        return Err(Error::input(format!("non-finite breakpoint {b}")));
    }
    if let Some(w) = breakpoints.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::input(format!(
            "breakpoints must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    if let Some(p) = pieces.iter().find(|p| !p.is_finite()) {
        return Err(Error::input(format!("non-finite piece {p:?}")));
    }
    for (i, &x) in breakpoints.iter().enumerate().skip(1) {
        let left = pieces[i - 1].eval(x);
        let right = pieces[i].eval(x);
        if (left - right).abs() > tolerance(left) {
            return Err(Error::Continuity { x, left, right });
        }
    }
    Ok(())
}

impl PiecewiseAffine {
    /// Builds a function from its breakpoints and pieces, checking every
    /// invariant. The input is taken as is; call [`normalize`](Self::normalize)
    /// to merge redundant pieces.
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<Affine>) -> Result<Self> {
        validate(&breakpoints, &pieces)?;
        Ok(PiecewiseAffine {
            breakpoints,
            pieces,
        })
    }

    fn from_parts_unchecked(breakpoints: Vec<f64>, pieces: Vec<Affine>) -> Self {
        debug_assert!(validate(&breakpoints, &pieces).is_ok());
        PiecewiseAffine {
            breakpoints,
            pieces,
        }
    }

    /// The continuous interpolant of `knots`, continued with `final_slope`
    /// beyond the last knot. The first knot must sit at `x = 0`.
    pub fn from_knots(knots: &[(f64, f64)], final_slope: f64) -> Result<Self> {
        let Some(&(x0, _)) = knots.first() else {
            return Err(Error::input("at least one knot is required"));
        };
        if x0 != 0.0 {
            return Err(Error::input(format!(
                "first knot must be at x = 0, got {x0}"
            )));
        }
        if !final_slope.is_finite() {
            return Err(Error::input("final slope must be finite"));
        }
        if let Some(&(x, y)) = knots.iter().find(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::input(format!("non-finite knot ({x}, {y})")));
        }
        if let Some(w) = knots.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(Error::input(format!(
                "knot abscissae must be strictly increasing ({} then {})",
                w[0].0, w[1].0
            )));
        }
        let mut pieces = Vec::with_capacity(knots.len());
        for w in knots.windows(2) {
            let ((xa, ya), (xb, yb)) = (w[0], w[1]);
            pieces.push(Affine::through(xa, ya, (yb - ya) / (xb - xa)));
        }
        let &(xl, yl) = knots.last().expect("nonempty");
        pieces.push(Affine::through(xl, yl, final_slope));
        let breakpoints = knots.iter().map(|k| k.0).collect();
        PiecewiseAffine::new(breakpoints, pieces)
    }

    pub fn zero() -> Self {
        Self::line(Affine::ZERO)
    }

    pub fn constant(c: f64) -> Self {
        Self::line(Affine::new(0.0, c))
    }

    pub fn identity() -> Self {
        Self::line(Affine::new(1.0, 0.0))
    }

    /// A single affine piece on the whole half-line.
    pub fn line(piece: Affine) -> Self {
        PiecewiseAffine {
            breakpoints: vec![0.0],
            pieces: vec![piece],
        }
    }

    /// Call payoff `(x - strike)^+`.
    pub fn call(strike: f64) -> Result<Self> {
        if !(strike > 0.0 && strike.is_finite()) {
            return Err(Error::input(format!(
                "strike must be positive, got {strike}"
            )));
        }
        Self::from_knots(&[(0.0, 0.0), (strike, 0.0)], 1.0)
    }

    /// Put payoff `(strike - x)^+`.
    pub fn put(strike: f64) -> Result<Self> {
        if !(strike > 0.0 && strike.is_finite()) {
            return Err(Error::input(format!(
                "strike must be positive, got {strike}"
            )));
        }
        Self::from_knots(&[(0.0, strike), (strike, 0.0)], 0.0)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[Affine] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Index of the piece whose interval `[b_i, b_{i+1})` contains `x`.
    pub fn piece_index(&self, x: f64) -> usize {
        self.breakpoints
            .partition_point(|&b| b <= x)
            .saturating_sub(1)
    }

    /// Value at `x`, rejecting negative or non-finite arguments.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::domain(format!(
                "piecewise-affine functions are defined on [0, inf), got x = {x}"
            )));
        }
        Ok(self.value_at(x))
    }

    /// Value at `x` without argument checks. Negative `x` extrapolates the
    /// first piece.
    #[inline]
    pub fn value_at(&self, x: f64) -> f64 {
        self.pieces[self.piece_index(x)].eval(x)
    }

    /// Largest absolute slope.
    pub fn lipschitz(&self) -> f64 {
        self.pieces
            .iter()
            .fold(0.0, |acc, p| acc.max(p.slope.abs()))
    }

    pub fn is_convex(&self) -> bool {
        self.pieces
            .windows(2)
            .all(|w| w[1].slope >= w[0].slope - PARALLEL_SLOPE * w[0].slope.abs().max(1.0))
    }

    pub fn is_concave(&self) -> bool {
        self.pieces
            .windows(2)
            .all(|w| w[1].slope <= w[0].slope + PARALLEL_SLOPE * w[0].slope.abs().max(1.0))
    }

    /// `x ↦ c * f(x)`.
    pub fn scale(&self, c: f64) -> Self {
        if c == 0.0 {
            return Self::zero();
        }
        PiecewiseAffine {
            breakpoints: self.breakpoints.clone(),
            pieces: self
                .pieces
                .iter()
                .map(|p| Affine::new(c * p.slope, c * p.intercept))
                .collect(),
        }
    }

    /// `s ↦ c * f(a * s) + d * s` for `a > 0`.
    pub fn affine_image(&self, a: f64, c: f64, d: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::input(format!(
                "argument scale must be positive, got {a}"
            )));
        }
        if !c.is_finite() || !d.is_finite() {
            return Err(Error::input("affine_image coefficients must be finite"));
        }
        if c == 0.0 {
            return Ok(Self::line(Affine::new(d, 0.0)));
        }
        let breakpoints = self.breakpoints.iter().map(|b| b / a).collect();
        let pieces = self
            .pieces
            .iter()
            .map(|p| Affine::new(c * p.slope * a + d, c * p.intercept))
            .collect();
        Ok(Self::from_parts_unchecked(breakpoints, pieces).normalize())
    }

    /// Pointwise sum.
    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, Affine::plus)
    }

    /// Applies `op` to the pair of pieces active on each interval of the
    /// common refinement. `op` must preserve continuity.
    fn zip_with(&self, other: &Self, op: impl Fn(Affine, Affine) -> Affine) -> Self {
        let mut b = Builder::with_capacity(self.len() + other.len());
        sweep_pairs(
            &Labeled::from_function(self, 0),
            &Labeled::from_function(other, 0),
            |u, _, (la, _), (lb, _)| b.push(u, op(la, lb), 0),
        );
        b.finish(false)
            .expect("sum of continuous functions is continuous")
            .to_function()
    }

    /// Merges adjacent pieces that carry the same line and snaps seams so both
    /// neighbours agree exactly. Idempotent.
    pub fn normalize(&self) -> Self {
        let raw = Labeled::from_function(self, 0);
        normalize_parts(raw.starts, raw.lines, raw.labels, false)
            .expect("validated function is continuous")
            .to_function()
    }

    /// Exact pointwise maximum.
    pub fn pointwise_max(fs: &[PiecewiseAffine]) -> Result<Self> {
        Self::reduce_all(fs, Envelope::Upper)
    }

    /// Exact pointwise minimum.
    pub fn pointwise_min(fs: &[PiecewiseAffine]) -> Result<Self> {
        Self::reduce_all(fs, Envelope::Lower)
    }

    pub fn max(&self, other: &Self) -> Self {
        Self::pointwise_max(&[self.clone(), other.clone()]).expect("two inputs")
    }

    pub fn min(&self, other: &Self) -> Self {
        Self::pointwise_min(&[self.clone(), other.clone()]).expect("two inputs")
    }

    fn reduce_all(fs: &[PiecewiseAffine], env: Envelope) -> Result<Self> {
        if fs.is_empty() {
            return Err(Error::input("pointwise envelope of an empty family"));
        }
        let items = fs.iter().map(|f| Labeled::from_function(f, 0)).collect();
        Ok(reduce(items, env, false)?.to_function())
    }

    /// Structural comparison: same number of pieces, breakpoints and piece
    /// coefficients equal within `rel * max(1, |·|)`.
    pub fn approx_eq(&self, other: &Self, rel: f64) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0);
        self.len() == other.len()
            && self
                .breakpoints
                .iter()
                .zip(&other.breakpoints)
                .all(|(&a, &b)| close(a, b))
            && self
                .pieces
                .iter()
                .zip(&other.pieces)
                .all(|(p, q)| close(p.slope, q.slope) && close(p.intercept, q.intercept))
    }
}

/// Pointwise minimum of labelled curves, together with the label of the
/// minimizing curve on every piece.
#[derive(Clone, Debug)]
pub struct LabeledMinimum {
    pub function: PiecewiseAffine,
    pub label_breakpoints: Vec<f64>,
    pub labels: Vec<i64>,
}

/// Pointwise minimum of `curves`, recording which label attains it. Where
/// several curves coincide the smallest label wins.
pub fn pointwise_min_labeled(curves: &[(i64, PiecewiseAffine)]) -> Result<LabeledMinimum> {
    if curves.is_empty() {
        return Err(Error::input("pointwise minimum of an empty family"));
    }
    let items = curves
        .iter()
        .map(|(label, f)| Labeled::from_function(f, *label))
        .collect();
    let out = reduce(items, Envelope::Lower, true)?;
    let (label_breakpoints, labels) = out.label_steps();
    Ok(LabeledMinimum {
        function: out.to_function(),
        label_breakpoints,
        labels,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Envelope {
    Lower,
    Upper,
}

impl Envelope {
    // Multiplying values by the sign turns "better" into "smaller".
    fn sign(self) -> f64 {
        match self {
            Envelope::Lower => 1.0,
            Envelope::Upper => -1.0,
        }
    }
}

/// Piecewise-affine data where each piece carries an integer label. Used
/// to track which candidate curve attains an envelope.
#[derive(Clone, Debug)]
pub(crate) struct Labeled {
    starts: Vec<f64>,
    lines: Vec<Affine>,
    labels: Vec<i64>,
}

impl Labeled {
    pub(crate) fn from_function(f: &PiecewiseAffine, label: i64) -> Self {
        Labeled {
            starts: f.breakpoints.clone(),
            lines: f.pieces.clone(),
            labels: vec![label; f.len()],
        }
    }

    pub(crate) fn to_function(&self) -> PiecewiseAffine {
        let merged = normalize_parts(
            self.starts.clone(),
            self.lines.clone(),
            self.labels.clone(),
            false,
        )
        .expect("labelled envelope is continuous");
        PiecewiseAffine::from_parts_unchecked(merged.starts, merged.lines)
    }

    /// Breakpoints and labels of the step function obtained by merging
    /// neighbouring pieces with equal labels.
    pub(crate) fn label_steps(&self) -> (Vec<f64>, Vec<i64>) {
        let mut starts: Vec<f64> = Vec::new();
        let mut labels: Vec<i64> = Vec::new();
        for (&x, &l) in self.starts.iter().zip(&self.labels) {
            if labels.last() != Some(&l) {
                starts.push(x);
                labels.push(l);
            }
        }
        (starts, labels)
    }

    fn combine(&self, other: &Labeled, env: Envelope, keep_labels: bool) -> Result<Labeled> {
        let mut b = Builder::with_capacity(self.starts.len() + other.starts.len());
        sweep_pairs(self, other, |u, v, a, c| {
            resolve_pair(u, v, a, c, env, &mut b)
        });
        b.finish(keep_labels)
    }
}

/// Walks the common refinement of two labelled functions, calling `visit`
/// with each interval `[u, v)` and the pieces active on it.
fn sweep_pairs(
    a: &Labeled,
    b: &Labeled,
    mut visit: impl FnMut(f64, f64, (Affine, i64), (Affine, i64)),
) {
    let (mut i, mut j) = (0, 0);
    let mut u = 0.0;
    loop {
        let va = a.starts.get(i + 1).copied().unwrap_or(f64::INFINITY);
        let vb = b.starts.get(j + 1).copied().unwrap_or(f64::INFINITY);
        let v = va.min(vb);
        visit(u, v, (a.lines[i], a.labels[i]), (b.lines[j], b.labels[j]));
        if v == f64::INFINITY {
            break;
        }
        if va == v {
            i += 1;
        }
        if vb == v {
            j += 1;
        }
        u = v;
    }
}

/// Emits the better of two lines on `[u, v)`, splitting at their crossing.
/// Coincident lines resolve to the smaller label.
fn resolve_pair(
    u: f64,
    v: f64,
    (la, ta): (Affine, i64),
    (lb, tb): (Affine, i64),
    env: Envelope,
    out: &mut Builder,
) {
    let sign = env.sign();
    let tie = if tb < ta { (lb, tb) } else { (la, ta) };
    let diff = |x: f64| sign * (la.eval(x) - lb.eval(x));
    let du = diff(u);
    let dslope = sign * (la.slope - lb.slope);

    let close_at = |x: f64| diff(x).abs() <= coincide_tol(la.eval(x).abs().max(lb.eval(x).abs()));
    let close_at_end = if v.is_finite() {
        close_at(v)
    } else {
        parallel(la.slope, lb.slope)
    };
    if close_at(u) && close_at_end {
        out.push(u, tie.0, tie.1);
        return;
    }
    let pick = |d: f64| {
        if d < 0.0 {
            (la, ta)
        } else if d > 0.0 {
            (lb, tb)
        } else {
            tie
        }
    };
    if dslope != 0.0 {
        let xc = u - du / dslope;
        if xc > u && xc < v {
            let (left, right) = if du < 0.0 {
                ((la, ta), (lb, tb))
            } else {
                ((lb, tb), (la, ta))
            };
            out.push(u, left.0, left.1);
            out.push(xc, right.0, right.1);
            return;
        }
    }
    let probe = if v.is_finite() {
        0.5 * (u + v)
    } else {
        u + 1.0 + u.abs()
    };
    let (line, label) = pick(diff(probe));
    out.push(u, line, label);
}

/// Pushes the upper envelope of a handful of lines on `[u, v)`.
pub(crate) fn push_upper_envelope(out: &mut Builder, lines: &[Affine], u: f64, v: f64, label: i64) {
    let mut cur = 0;
    for (k, l) in lines.iter().enumerate().skip(1) {
        let (vk, vc) = (l.eval(u), lines[cur].eval(u));
        if vk > vc + coincide_tol(vc)
            || ((vk - vc).abs() <= coincide_tol(vc) && l.slope > lines[cur].slope)
        {
            cur = k;
        }
    }
    let mut x = u;
    loop {
        out.push(x, lines[cur], label);
        let mut next: Option<(f64, usize)> = None;
        for (k, l) in lines.iter().enumerate() {
            if l.slope <= lines[cur].slope || parallel(l.slope, lines[cur].slope) {
                continue;
            }
            let xc = (x + (lines[cur].eval(x) - l.eval(x)) / (l.slope - lines[cur].slope)).max(x);
            if xc >= v {
                continue;
            }
            next = match next {
                Some((xb, kb)) if xb < xc || (xb == xc && lines[kb].slope >= l.slope) => {
                    Some((xb, kb))
                }
                _ => Some((xc, k)),
            };
        }
        match next {
            Some((xc, k)) => {
                x = xc;
                cur = k;
            }
            None => break,
        }
    }
}

/// Accumulates pieces left to right; a piece starting where the previous one
/// starts replaces it.
#[derive(Debug, Default)]
pub(crate) struct Builder {
    starts: Vec<f64>,
    lines: Vec<Affine>,
    labels: Vec<i64>,
}

impl Builder {
    pub(crate) fn with_capacity(n: usize) -> Self {
        Builder {
            starts: Vec::with_capacity(n),
            lines: Vec::with_capacity(n),
            labels: Vec::with_capacity(n),
        }
    }

    pub(crate) fn push(&mut self, x: f64, line: Affine, label: i64) {
        if let Some(&last) = self.starts.last() {
            if x <= last {
                *self.lines.last_mut().expect("nonempty") = line;
                *self.labels.last_mut().expect("nonempty") = label;
                return;
            }
            if *self.lines.last().expect("nonempty") == line
                && *self.labels.last().expect("nonempty") == label
            {
                return;
            }
        }
        self.starts.push(x);
        self.lines.push(line);
        self.labels.push(label);
    }

    pub(crate) fn finish(self, keep_labels: bool) -> Result<Labeled> {
        normalize_parts(self.starts, self.lines, self.labels, keep_labels)
    }
}

/// Removes slivers, merges coincident neighbours and snaps seams. Labels
/// block merging only when `keep_labels` is set.
fn normalize_parts(
    mut starts: Vec<f64>,
    lines: Vec<Affine>,
    labels: Vec<i64>,
    keep_labels: bool,
) -> Result<Labeled> {
    let n = starts.len();

    // Slivers: replace a tiny middle piece by the crossing of its neighbours.
    let mut s1 = Vec::with_capacity(n);
    let mut l1: Vec<Affine> = Vec::with_capacity(n);
    let mut t1 = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 && i + 1 < n && !l1.is_empty() {
            let (x0, x1) = (starts[i], starts[i + 1]);
            let scale = x0.abs().max(1.0);
            if x1 - x0 <= SLIVER_REL * scale {
                let prev = *l1.last().expect("nonempty");
                let next = lines[i + 1];
                let slack = 4.0 * SLIVER_REL * scale;
                let xc = match prev.crossing_near(next, x0) {
                    Some(xc) => xc,
                    None if (prev.eval(x0) - next.eval(x0)).abs()
                        <= coincide_tol(prev.eval(x0)) =>
                    {
                        x0
                    }
                    None => f64::NAN,
                };
                let after = starts.get(i + 2).copied().unwrap_or(f64::INFINITY);
                let last_start = *s1.last().expect("nonempty");
                if xc >= x0 - slack && xc <= x1 + slack && xc > last_start && xc < after {
                    starts[i + 1] = xc;
                    continue;
                }
            }
        }
        s1.push(starts[i]);
        l1.push(lines[i]);
        t1.push(labels[i]);
    }

    // Merge neighbours that carry the same line over the merged range.
    let m = s1.len();
    let mut s2: Vec<f64> = Vec::with_capacity(m);
    let mut l2: Vec<Affine> = Vec::with_capacity(m);
    let mut t2: Vec<i64> = Vec::with_capacity(m);
    for i in 0..m {
        if let (Some(&p), Some(&tp)) = (l2.last(), t2.last()) {
            let q = l1[i];
            let x = s1[i];
            let end = s1.get(i + 1).copied().unwrap_or(f64::INFINITY);
            let same_at = |y: f64| (p.eval(y) - q.eval(y)).abs() <= coincide_tol(p.eval(y));
            let same_end = if end.is_finite() {
                same_at(end)
            } else {
                parallel(p.slope, q.slope)
            };
            if (!keep_labels || tp == t1[i]) && same_at(x) && same_end {
                continue;
            }
        }
        s2.push(s1[i]);
        l2.push(l1[i]);
        t2.push(t1[i]);
    }

    // Snap seams.
    for i in 1..l2.len() {
        let x = s2[i];
        let left = l2[i - 1].eval(x);
        let right = l2[i].eval(x);
        let gap = (left - right).abs();
        if gap > tolerance(left) {
            return Err(Error::Continuity { x, left, right });
        }
        if gap > SNAP_REL * left.abs().max(1.0) {
            l2[i].intercept = left - l2[i].slope * x;
        }
    }

    Ok(Labeled {
        starts: s2,
        lines: l2,
        labels: t2,
    })
}

/// Deterministic balanced reduction: pairs are formed left to right at each
/// level, so the result does not depend on scheduling.
pub(crate) fn reduce(items: Vec<Labeled>, env: Envelope, keep_labels: bool) -> Result<Labeled> {
    let mut level = items;
    if level.is_empty() {
        return Err(Error::input("envelope of an empty family"));
    }
    while level.len() > 1 {
        let mut pairs = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(a) = it.next() {
            pairs.push((a, it.next()));
        }
        level = par::map_owned(pairs, |(a, b)| match b {
            Some(b) => a.combine(&b, env, keep_labels),
            None => Ok(a),
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    }
    Ok(level.pop().expect("one element left"))
}

/// Running maximum over a window that only moves right.
pub(crate) struct SlidingMax<'a> {
    values: &'a [f64],
    queue: VecDeque<usize>,
    lo: usize,
    hi: usize,
}

impl<'a> SlidingMax<'a> {
    pub(crate) fn new(values: &'a [f64]) -> Self {
        SlidingMax {
            values,
            queue: VecDeque::new(),
            lo: 0,
            hi: 0,
        }
    }

    /// Moves the window to `[lo, hi)`; both ends must be non-decreasing
    /// across calls. Returns the index of the maximum, if the window is
    /// nonempty.
    pub(crate) fn advance(&mut self, lo: usize, hi: usize) -> Option<usize> {
        let hi = hi.min(self.values.len());
        while self.hi < hi {
            let v = self.values[self.hi];
            while self.queue.back().is_some_and(|&b| self.values[b] <= v) {
                self.queue.pop_back();
            }
            self.queue.push_back(self.hi);
            self.hi += 1;
        }
        self.lo = self.lo.max(lo);
        while self.queue.front().is_some_and(|&f| f < self.lo) {
            self.queue.pop_front();
        }
        self.queue.front().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call500() -> PiecewiseAffine {
        PiecewiseAffine::call(500.0).unwrap()
    }

    #[test]
    fn eval_call_payoff() {
        let f = call500();
        assert_eq!(f.eval(450.0).unwrap(), 0.0);
        assert_eq!(f.eval(600.0).unwrap(), 100.0);
        assert_eq!(PiecewiseAffine::identity().eval(7.3).unwrap(), 7.3);
    }

    #[test]
    fn eval_rejects_bad_arguments() {
        let f = call500();
        assert!(matches!(f.eval(-1.0), Err(Error::Domain(_))));
        assert!(matches!(f.eval(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(f.eval(f64::INFINITY), Err(Error::Domain(_))));
    }

    #[test]
    fn from_knots_examples() {
        let f = PiecewiseAffine::from_knots(&[(0.0, 0.0), (500.0, 0.0)], 1.0).unwrap();
        assert_eq!(f, call500());
        let z = PiecewiseAffine::from_knots(&[(0.0, 0.0)], 0.0).unwrap();
        assert_eq!(z, PiecewiseAffine::zero());
        let g = PiecewiseAffine::from_knots(&[(0.0, 100.0), (500.0, 100.0), (600.0, 200.0)], 1.0)
            .unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.eval(550.0).unwrap(), 150.0);
    }

    #[test]
    fn from_knots_rejects_bad_orders() {
        assert!(PiecewiseAffine::from_knots(&[(0.0, 0.0), (5.0, 1.0), (5.0, 2.0)], 0.0).is_err());
        assert!(PiecewiseAffine::from_knots(&[(0.0, 0.0), (5.0, 1.0), (4.0, 2.0)], 0.0).is_err());
        assert!(PiecewiseAffine::from_knots(&[(1.0, 0.0)], 0.0).is_err());
        assert!(PiecewiseAffine::from_knots(&[], 0.0).is_err());
    }

    #[test]
    fn new_rejects_discontinuity() {
        let err = PiecewiseAffine::new(
            vec![0.0, 1.0],
            vec![Affine::new(0.0, 0.0), Affine::new(0.0, 1.0)],
        )
        .unwrap_err();
        assert!(err.is_internal());
    }

    #[test]
    fn max_with_constant() {
        let out = call500().max(&PiecewiseAffine::constant(50.0));
        assert_eq!(out.breakpoints(), &[0.0, 550.0]);
        assert_eq!(
            out.pieces(),
            &[Affine::new(0.0, 50.0), Affine::new(1.0, -500.0)]
        );
    }

    #[test]
    fn min_with_constant() {
        let out = call500().min(&PiecewiseAffine::constant(50.0));
        assert_eq!(out.breakpoints(), &[0.0, 500.0, 550.0]);
        assert_eq!(out.eval(200.0).unwrap(), 0.0);
        assert_eq!(out.eval(520.0).unwrap(), 20.0);
        assert_eq!(out.eval(700.0).unwrap(), 50.0);
    }

    #[test]
    fn envelopes_trivial_cases() {
        let f = call500();
        assert_eq!(f.max(&f), f);
        assert_eq!(
            PiecewiseAffine::pointwise_min(std::slice::from_ref(&f)).unwrap(),
            f
        );
        let id = PiecewiseAffine::identity();
        assert_eq!(PiecewiseAffine::zero().max(&id), id);
        assert!(PiecewiseAffine::pointwise_max(&[]).is_err());
        assert!(PiecewiseAffine::pointwise_min(&[]).is_err());
    }

    #[test]
    fn affine_image_examples() {
        let f = call500();
        let g = f.affine_image(1.2, 1.0, 0.0).unwrap();
        assert_eq!(g.breakpoints().len(), 2);
        assert!((g.breakpoints()[1] - 500.0 / 1.2).abs() < 1e-12);
        assert!((g.eval(500.0).unwrap() - 100.0).abs() < 1e-12);
        assert_eq!(f.affine_image(1.0, 1.0, 0.0).unwrap(), f);
        let line = PiecewiseAffine::zero()
            .affine_image(0.7, 3.0, -2.0)
            .unwrap();
        assert_eq!(line, PiecewiseAffine::line(Affine::new(-2.0, 0.0)));
        assert!(f.affine_image(0.0, 1.0, 0.0).is_err());
        assert!(f.affine_image(-1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn lipschitz_examples() {
        assert_eq!(call500().lipschitz(), 1.0);
        assert_eq!(PiecewiseAffine::zero().lipschitz(), 0.0);
        assert_eq!(call500().scale(5.0).lipschitz(), 5.0);
    }

    #[test]
    fn normalize_merges_collinear_pieces() {
        let g = PiecewiseAffine::from_knots(&[(0.0, 100.0), (500.0, 100.0), (600.0, 200.0)], 1.0)
            .unwrap();
        let n = g.normalize();
        assert_eq!(n.len(), 2);
        assert_eq!(n.normalize(), n);
    }

    #[test]
    fn json_layout_and_round_trip() {
        let f = PiecewiseAffine::from_knots(&[(0.0, 0.1), (0.3, 0.7), (1.0 / 3.0, 2.0)], -0.25)
            .unwrap();
        let text = serde_json::to_string(&f).unwrap();
        assert!(text.starts_with("{\"breakpoints\":"));
        assert!(text.contains("\"slopes\"") && text.contains("\"intercepts\""));
        let back: PiecewiseAffine = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
        let bad = r#"{"breakpoints":[0,1],"slopes":[0],"intercepts":[0,0]}"#;
        assert!(serde_json::from_str::<PiecewiseAffine>(bad).is_err());
    }

    #[test]
    fn labeled_min_prefers_smaller_label_on_ties() {
        let f = PiecewiseAffine::constant(3.0);
        let out = pointwise_min_labeled(&[(4, f.clone()), (2, f.clone()), (7, f)]).unwrap();
        assert_eq!(out.labels, vec![2]);
    }

    #[test]
    fn sliding_max_tracks_window() {
        let v = [1.0, 5.0, 2.0, 4.0, 3.0];
        let mut w = SlidingMax::new(&v);
        assert_eq!(w.advance(0, 2), Some(1));
        assert_eq!(w.advance(2, 4), Some(3));
        assert_eq!(w.advance(4, 5), Some(4));
        assert_eq!(w.advance(5, 5), None);
    }
}

//! Piecewise-linear and step functions on the torus with exact integration.
//!
//! A [`PiecewiseLinear`] is continuous except possibly at `0`; it stores the
//! value at every breakpoint (the right limit) and the left limit `f(0-)`.
//! A [`StepFunction`] is right-continuous and constant on `[b_i, b_{i+1})`.
//! Both always carry `0` as their first breakpoint.
//!
//! Products are integrated per piece of the common refinement with the
//! closed form `ℓ(2p₁p₂ + p₁q₂ + q₁p₂ + 2q₁q₂)/6`, so inner products and L²
//! norms carry only the rounding error of the stored values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{ticks_to_f64, Dyadic, ONE};

/// Common interface of the two function families.
pub trait TorusFunction {
    /// Breakpoints, strictly increasing, starting at `0`.
    fn knots(&self) -> &[Dyadic];

    fn evaluate(&self, x: Dyadic) -> f64;

    /// Left limit `f(x-)`; at `x = 0` this is `f(1-)`.
    fn evaluate_left(&self, x: Dyadic) -> f64;

    /// `(f(start), f(end-))` on every piece of `refinement`, which must
    /// contain all of `self.knots()`.
    fn sample_pieces(&self, refinement: &[Dyadic]) -> Vec<(f64, f64)> {
        let mut cursor = self.cursor();
        (0..refinement.len())
            .map(|i| {
                let (s, e) = piece_bounds(refinement, i);
                cursor.piece(s, e)
            })
            .collect()
    }

    fn cursor(&self) -> PieceCursor<'_>;

    fn is_step(&self) -> bool;
}

/// Start and end ticks of piece `i` of a knot vector (the last piece ends at `2^60`).
pub fn piece_bounds(knots: &[Dyadic], i: usize) -> (u64, u64) {
    let s = knots[i].ticks();
    let e = knots.get(i + 1).map_or(ONE, |k| k.ticks());
    (s, e)
}

/// Walks the pieces of a function in increasing order of position.
pub struct PieceCursor<'a> {
    knots: &'a [Dyadic],
    values: &'a [f64],
    /// `None` for step functions.
    left_limit: Option<f64>,
    idx: usize,
}

impl PieceCursor<'_> {
    /// Values at `start` and at `end-` for a sub-interval of one original piece.
    /// Calls must be made with non-decreasing `start`.
    pub fn piece(&mut self, start: u64, end: u64) -> (f64, f64) {
        while self.idx + 1 < self.knots.len() && self.knots[self.idx + 1].ticks() <= start {
            self.idx += 1;
        }
        let i = self.idx;
        let v0 = self.values[i];
        let Some(ll) = self.left_limit else {
            return (v0, v0);
        };
        let (k0, k1) = piece_bounds(self.knots, i);
        debug_assert!(end <= k1 && start >= k0, "refinement misses a knot");
        let v1 = if i + 1 < self.values.len() {
            self.values[i + 1]
        } else {
            ll
        };
        (interp(k0, k1, v0, v1, start), interp(k0, k1, v0, v1, end))
    }
}

fn interp(k0: u64, k1: u64, v0: f64, v1: f64, pos: u64) -> f64 {
    if pos == k0 {
        v0
    } else if pos == k1 {
        v1
    } else {
        v0 + (v1 - v0) * ((pos - k0) as f64 / (k1 - k0) as f64)
    }
}

fn locate(knots: &[Dyadic], x: Dyadic) -> usize {
    knots.partition_point(|k| *k <= x) - 1
}

fn check_knots(knots: &[Dyadic]) -> Result<()> {
    if knots.first() != Some(&Dyadic::ZERO) {
        return Err(Error::Domain("breakpoints must start at 0".into()));
    }
    if !knots.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Domain("breakpoints must be strictly increasing".into()));
    }
    Ok(())
}

/// Sorted union of several knot vectors.
pub fn union_knots<'a, I>(sets: I) -> Vec<Dyadic>
where
    I: IntoIterator<Item = &'a [Dyadic]>,
{
    let mut all: Vec<Dyadic> = sets.into_iter().flatten().copied().collect();
    all.push(Dyadic::ZERO);
    all.sort_unstable();
    all.dedup();
    all
}

pub fn merge_knots(a: &[Dyadic], b: &[Dyadic]) -> Vec<Dyadic> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x == y => {
                i += 1;
                j += 1;
                *x
            }
            (Some(x), Some(y)) if x < y => {
                i += 1;
                *x
            }
            (Some(_), Some(y)) => {
                j += 1;
                *y
            }
            (Some(x), None) => {
                i += 1;
                *x
            }
            (None, Some(y)) => {
                j += 1;
                *y
            }
            (None, None) => unreachable!(),
        };
        out.push(next);
    }
    out
}

/// Piecewise-linear function on the torus, continuous except possibly at `0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    #[serde(rename = "breakpoints")]
    knots: Vec<Dyadic>,
    values: Vec<f64>,
    #[serde(rename = "left_limit_at_zero")]
    left_limit: f64,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<Dyadic>, values: Vec<f64>, left_limit: f64) -> Result<Self> {
        check_knots(&knots)?;
        if knots.len() != values.len() {
            return Err(Error::Domain(format!(
                "{} breakpoints but {} values",
                knots.len(),
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) || !left_limit.is_finite() {
            return Err(Error::Domain("non-finite value".into()));
        }
        Ok(PiecewiseLinear {
            knots,
            values,
            left_limit,
        })
    }

    pub fn constant(c: f64) -> Self {
        PiecewiseLinear {
            knots: vec![Dyadic::ZERO],
            values: vec![c],
            left_limit: c,
        }
    }

    /// `x ↦ a + b x` on `[0, 1)`, with a jump at `0` unless `b = 0`.
    pub fn affine(a: f64, b: f64) -> Self {
        PiecewiseLinear {
            knots: vec![Dyadic::ZERO],
            values: vec![a],
            left_limit: a + b,
        }
    }

    /// Continuous function interpolating `values` at `knots`.
    pub fn periodic(knots: Vec<Dyadic>, values: Vec<f64>) -> Result<Self> {
        let ll = *values
            .first()
            .ok_or_else(|| Error::Domain("empty function".into()))?;
        Self::new(knots, values, ll)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn left_limit(&self) -> f64 {
        self.left_limit
    }

    pub fn is_continuous(&self) -> bool {
        self.left_limit == self.values[0]
    }

    /// Whether all breakpoints lie in `nodes`.
    pub fn knots_within(&self, nodes: &[Dyadic]) -> bool {
        self.knots.iter().all(|k| nodes.binary_search(k).is_ok())
    }

    /// Finest dyadic level among the breakpoints.
    pub fn resolution(&self) -> u32 {
        self.knots.iter().map(|k| k.resolution()).max().unwrap_or(0)
    }

    pub fn evaluate_f64(&self, x: f64) -> f64 {
        self.evaluate(Dyadic::snap(x))
    }

    pub fn scale(&self, s: f64) -> Self {
        PiecewiseLinear {
            knots: self.knots.clone(),
            values: self.values.iter().map(|v| v * s).collect(),
            left_limit: self.left_limit * s,
        }
    }

    /// Same function written on a finer knot vector.
    pub fn refine(&self, refinement: &[Dyadic]) -> Self {
        let pieces = self.sample_pieces(refinement);
        PiecewiseLinear {
            knots: refinement.to_vec(),
            values: pieces.iter().map(|p| p.0).collect(),
            left_limit: pieces.last().map_or(self.left_limit, |p| p.1),
        }
    }

    /// `x ↦ f(x + s)`.
    pub fn translate(&self, s: Dyadic) -> Self {
        let mut knots: Vec<Dyadic> = self.knots.iter().map(|k| k.sub(s)).collect();
        knots.push(Dyadic::ZERO);
        knots.sort_unstable();
        knots.dedup();
        let values = knots.iter().map(|&k| self.evaluate(k.add(s))).collect();
        let left_limit = self.evaluate_left(s);
        PiecewiseLinear {
            knots,
            values,
            left_limit,
        }
    }

    pub fn integral(&self) -> f64 {
        integrate_pieces(&self.knots, &self.sample_pieces(&self.knots), |p, q| {
            0.5 * (p + q)
        })
    }

    pub fn l1_norm(&self) -> f64 {
        integrate_pieces(&self.knots, &self.sample_pieces(&self.knots), abs_mean)
    }

    pub fn l2_norm(&self) -> f64 {
        inner_product(self, self).max(0.0).sqrt()
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        check_exponent(p)?;
        let s = integrate_pieces(&self.knots, &self.sample_pieces(&self.knots), |a, b| {
            abs_power_mean(a, b, p)
        });
        Ok(s.powf(p.recip()))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .fold(self.left_limit.abs(), |m, v| m.max(v.abs()))
    }

    pub fn abs(&self) -> Self {
        abs_sum(&[(1.0, self)])
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::Domain(format!("L^p exponent must lie in (1, ∞), got {p}")));
    }
    Ok(())
}

/// `∫₀¹ |a + (b - a)s| ds`.
fn abs_mean(a: f64, b: f64) -> f64 {
    if a * b >= 0.0 {
        0.5 * (a.abs() + b.abs())
    } else {
        0.5 * (a * a + b * b) / (a.abs() + b.abs())
    }
}

/// `∫₀¹ |a + (b - a)s|^p ds` in closed form.
pub(crate) fn abs_power_mean(a: f64, b: f64, p: f64) -> f64 {
    let (x, y) = (a.abs(), b.abs());
    if a * b < 0.0 {
        return (x.powf(p + 1.0) + y.powf(p + 1.0)) / ((p + 1.0) * (x + y));
    }
    let hi = x.max(y);
    if hi == 0.0 {
        return 0.0;
    }
    if (y - x).abs() <= 1e-6 * hi {
        // symmetric expansion around the midpoint avoids cancellation
        let m = 0.5 * (x + y);
        let h2 = (0.5 * (y - x) / m).powi(2);
        return m.powf(p) * (1.0 + p * (p - 1.0) * h2 / 6.0);
    }
    (y.powf(p + 1.0) - x.powf(p + 1.0)) / ((p + 1.0) * (y - x))
}

fn integrate_pieces(knots: &[Dyadic], pieces: &[(f64, f64)], mean: impl Fn(f64, f64) -> f64) -> f64 {
    pieces
        .iter()
        .enumerate()
        .map(|(i, &(p, q))| {
            let (s, e) = piece_bounds(knots, i);
            ticks_to_f64(e - s) * mean(p, q)
        })
        .sum()
}

impl TorusFunction for PiecewiseLinear {
    fn knots(&self) -> &[Dyadic] {
        &self.knots
    }

    fn evaluate(&self, x: Dyadic) -> f64 {
        let i = locate(&self.knots, x);
        let (k0, k1) = piece_bounds(&self.knots, i);
        let v1 = self.values.get(i + 1).copied().unwrap_or(self.left_limit);
        interp(k0, k1, self.values[i], v1, x.ticks())
    }

    fn evaluate_left(&self, x: Dyadic) -> f64 {
        if x == Dyadic::ZERO {
            self.left_limit
        } else {
            self.evaluate(x)
        }
    }

    fn cursor(&self) -> PieceCursor<'_> {
        PieceCursor {
            knots: &self.knots,
            values: &self.values,
            left_limit: Some(self.left_limit),
            idx: 0,
        }
    }

    fn is_step(&self) -> bool {
        false
    }
}

/// Right-continuous step function on the torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    #[serde(rename = "breakpoints")]
    knots: Vec<Dyadic>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(knots: Vec<Dyadic>, values: Vec<f64>) -> Result<Self> {
        check_knots(&knots)?;
        if knots.len() != values.len() {
            return Err(Error::Domain(format!(
                "{} breakpoints but {} values",
                knots.len(),
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("non-finite value".into()));
        }
        Ok(StepFunction { knots, values })
    }

    pub fn constant(c: f64) -> Self {
        StepFunction {
            knots: vec![Dyadic::ZERO],
            values: vec![c],
        }
    }

    /// Indicator of the arc `[a, a + len)`, `len` in ticks.
    pub fn indicator(a: Dyadic, len: u64) -> Self {
        if len >= ONE {
            return Self::constant(1.0);
        }
        if len == 0 {
            return Self::constant(0.0);
        }
        let b = a.add_ticks(len);
        let mut pts = vec![(Dyadic::ZERO, 0.0), (a, 1.0), (b, 0.0)];
        if b < a || b == Dyadic::ZERO {
            // wraps through 0
            pts[0].1 = 1.0;
        }
        pts.sort_by_key(|p| p.0);
        let mut knots = Vec::new();
        let mut values = Vec::new();
        for (k, v) in pts {
            if knots.last() == Some(&k) {
                *values.last_mut().unwrap() = v;
            } else {
                knots.push(k);
                values.push(v);
            }
        }
        StepFunction { knots, values }
    }

    /// Function equal to `values[i]` on the shifted interval
    /// `[ξ + i 2^-level, ξ + (i+1) 2^-level)`.
    pub fn from_shifted_grid(level: u32, shift: Dyadic, values: &[f64]) -> Self {
        let m = 1u64 << level;
        debug_assert_eq!(values.len() as u64, m);
        if level == 0 {
            return Self::constant(values[0]);
        }
        let step = ONE >> level;
        let r = shift.ticks() % step;
        let i0 = (m - shift.ticks() / step) % m;
        let mut knots = Vec::with_capacity(m as usize + 1);
        let mut vals = Vec::with_capacity(m as usize + 1);
        if r != 0 {
            knots.push(Dyadic::ZERO);
            vals.push(values[((i0 + m - 1) % m) as usize]);
        }
        for t in 0..m {
            let i = (i0 + t) % m;
            knots.push(Dyadic::from_ticks(r + t * step));
            vals.push(values[i as usize]);
        }
        StepFunction {
            knots,
            values: vals,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn resolution(&self) -> u32 {
        self.knots.iter().map(|k| k.resolution()).max().unwrap_or(0)
    }

    pub fn scale(&self, s: f64) -> Self {
        StepFunction {
            knots: self.knots.clone(),
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        StepFunction {
            knots: self.knots.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn refine(&self, refinement: &[Dyadic]) -> Self {
        let pieces = self.sample_pieces(refinement);
        StepFunction {
            knots: refinement.to_vec(),
            values: pieces.iter().map(|p| p.0).collect(),
        }
    }

    /// Drops breakpoints across which the value does not change.
    pub fn simplify(&self) -> Self {
        let mut knots = vec![self.knots[0]];
        let mut values = vec![self.values[0]];
        for (k, v) in self.knots.iter().zip(&self.values).skip(1) {
            if *v != *values.last().unwrap() {
                knots.push(*k);
                values.push(*v);
            }
        }
        StepFunction { knots, values }
    }

    /// Lengths of the pieces.
    pub fn piece_lengths(&self) -> Vec<f64> {
        (0..self.knots.len())
            .map(|i| {
                let (s, e) = piece_bounds(&self.knots, i);
                ticks_to_f64(e - s)
            })
            .collect()
    }

    pub fn integral(&self) -> f64 {
        self.piece_lengths()
            .iter()
            .zip(&self.values)
            .map(|(l, v)| l * v)
            .sum()
    }

    pub fn l2_norm(&self) -> f64 {
        inner_product(self, self).max(0.0).sqrt()
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        check_exponent(p)?;
        let s: f64 = self
            .piece_lengths()
            .iter()
            .zip(&self.values)
            .map(|(l, v)| l * v.abs().powf(p))
            .sum();
        Ok(s.powf(p.recip()))
    }

    /// Measure of `{x : pred(f(x))}`.
    pub fn measure_where(&self, pred: impl Fn(f64) -> bool) -> f64 {
        self.piece_lengths()
            .iter()
            .zip(&self.values)
            .filter(|(_, v)| pred(**v))
            .map(|(l, _)| l)
            .sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl TorusFunction for StepFunction {
    fn knots(&self) -> &[Dyadic] {
        &self.knots
    }

    fn evaluate(&self, x: Dyadic) -> f64 {
        self.values[locate(&self.knots, x)]
    }

    fn evaluate_left(&self, x: Dyadic) -> f64 {
        if x == Dyadic::ZERO {
            *self.values.last().unwrap()
        } else {
            let i = locate(&self.knots, x);
            if self.knots[i] == x {
                self.values[i - 1]
            } else {
                self.values[i]
            }
        }
    }

    fn cursor(&self) -> PieceCursor<'_> {
        PieceCursor {
            knots: &self.knots,
            values: &self.values,
            left_limit: None,
            idx: 0,
        }
    }

    fn is_step(&self) -> bool {
        true
    }
}

/// `∫₀¹ f g` computed exactly on the common refinement.
pub fn inner_product<F, G>(f: &F, g: &G) -> f64
where
    F: TorusFunction + ?Sized,
    G: TorusFunction + ?Sized,
{
    let knots = merge_knots(f.knots(), g.knots());
    let mut cf = f.cursor();
    let mut cg = g.cursor();
    let mut acc = 0.0;
    for i in 0..knots.len() {
        let (s, e) = piece_bounds(&knots, i);
        let (p1, q1) = cf.piece(s, e);
        let (p2, q2) = cg.piece(s, e);
        let l = ticks_to_f64(e - s);
        acc += l * (2.0 * p1 * p2 + p1 * q2 + q1 * p2 + 2.0 * q1 * q2) / 6.0;
    }
    acc
}

/// `α f + β g` for two piecewise-linear functions.
pub fn combine(alpha: f64, f: &PiecewiseLinear, beta: f64, g: &PiecewiseLinear) -> PiecewiseLinear {
    linear_combination(&[(alpha, f), (beta, g)])
}

/// `α f + β g` for two step functions.
pub fn combine_steps(alpha: f64, f: &StepFunction, beta: f64, g: &StepFunction) -> StepFunction {
    let knots = merge_knots(&f.knots, &g.knots);
    let pf = f.sample_pieces(&knots);
    let pg = g.sample_pieces(&knots);
    let values = pf
        .iter()
        .zip(&pg)
        .map(|(a, b)| alpha * a.0 + beta * b.0)
        .collect();
    StepFunction { knots, values }
}

/// Pointwise maximum of step functions.
pub fn max_steps(fs: &[&StepFunction]) -> StepFunction {
    let knots = union_knots(fs.iter().map(|f| f.knots()));
    let mut values = vec![f64::NEG_INFINITY; knots.len()];
    for f in fs {
        for (v, p) in values.iter_mut().zip(f.sample_pieces(&knots)) {
            *v = v.max(p.0);
        }
    }
    StepFunction { knots, values }
}

/// Visits each piece of the common refinement of `terms` with the scaled end
/// values of every term.
fn for_each_cell(terms: &[(f64, &PiecewiseLinear)], mut visit: impl FnMut(u64, u64, &[(f64, f64)])) {
    let knots = union_knots(terms.iter().map(|(_, f)| f.knots()));
    let mut cursors: Vec<_> = terms.iter().map(|(_, f)| f.cursor()).collect();
    let mut buf = vec![(0.0, 0.0); terms.len()];
    for i in 0..knots.len() {
        let (s, e) = piece_bounds(&knots, i);
        for ((slot, cur), (c, _)) in buf.iter_mut().zip(cursors.iter_mut()).zip(terms) {
            let (p, q) = cur.piece(s, e);
            *slot = (c * p, c * q);
        }
        visit(s, e, &buf);
    }
}

/// `Σ c_i f_i` on the common refinement.
pub fn linear_combination(terms: &[(f64, &PiecewiseLinear)]) -> PiecewiseLinear {
    if terms.is_empty() {
        return PiecewiseLinear::constant(0.0);
    }
    let mut knots = Vec::new();
    let mut values = Vec::new();
    let mut left_limit = 0.0;
    for_each_cell(terms, |s, _, vals| {
        knots.push(Dyadic::from_ticks(s));
        values.push(vals.iter().map(|v| v.0).sum());
        left_limit = vals.iter().map(|v| v.1).sum();
    });
    PiecewiseLinear {
        knots,
        values,
        left_limit,
    }
}

/// Snapped offset of a crossing at fraction `frac` of a piece of `len` ticks,
/// kept strictly inside the piece; `None` if the piece is a single tick.
fn crossing_offset(frac: f64, len: u64) -> Option<u64> {
    if len < 2 {
        return None;
    }
    let o = (frac * len as f64).round() as u64;
    Some(o.clamp(1, len - 1))
}

/// `Σ |c_i f_i|`, with breakpoints inserted at every zero crossing of a term.
pub fn abs_sum(terms: &[(f64, &PiecewiseLinear)]) -> PiecewiseLinear {
    if terms.is_empty() {
        return PiecewiseLinear::constant(0.0);
    }
    let mut knots = Vec::new();
    let mut values = Vec::new();
    let mut left_limit = 0.0;
    let mut crossings: Vec<(u64, usize)> = Vec::new();
    let mut sign: Vec<f64> = vec![0.0; terms.len()];
    for_each_cell(terms, |s, e, vals| {
        let len = e - s;
        crossings.clear();
        let (mut big_p, mut big_q) = (0.0, 0.0);
        for (i, &(p, q)) in vals.iter().enumerate() {
            let sg = if p != 0.0 { p.signum() } else { q.signum() };
            sign[i] = sg;
            big_p += sg * p;
            big_q += sg * q;
            if p * q < 0.0 {
                if let Some(o) = crossing_offset(p / (p - q), len) {
                    crossings.push((o, i));
                }
            }
        }
        crossings.sort_unstable();
        knots.push(Dyadic::from_ticks(s));
        values.push(big_p.max(0.0));
        let mut c = 0;
        while c < crossings.len() {
            let o = crossings[c].0;
            let t = o as f64 / len as f64;
            knots.push(Dyadic::from_ticks(s + o));
            values.push((big_p + (big_q - big_p) * t).max(0.0));
            while c < crossings.len() && crossings[c].0 == o {
                let i = crossings[c].1;
                let (p, q) = vals[i];
                big_p -= 2.0 * sign[i] * p;
                big_q -= 2.0 * sign[i] * q;
                sign[i] = -sign[i];
                c += 1;
            }
        }
        left_limit = big_q.max(0.0);
    });
    PiecewiseLinear {
        knots,
        values,
        left_limit,
    }
}

/// Pointwise `max_i |c_i f_i|`, with breakpoints at the switches of the
/// upper envelope.
pub fn max_abs_envelope(terms: &[(f64, &PiecewiseLinear)]) -> PiecewiseLinear {
    if terms.is_empty() {
        return PiecewiseLinear::constant(0.0);
    }
    let mut knots = Vec::new();
    let mut values = Vec::new();
    let mut left_limit = 0.0;
    // lines y = b + m t on t ∈ [0, 1]
    let mut lines: Vec<(f64, f64)> = Vec::with_capacity(2 * terms.len());
    for_each_cell(terms, |s, e, vals| {
        let len = e - s;
        lines.clear();
        for &(p, q) in vals {
            lines.push((p, q - p));
            lines.push((-p, p - q));
        }
        // line of largest value at t = 0, ties to the steepest
        let mut cur = 0;
        for (i, l) in lines.iter().enumerate() {
            let c = lines[cur];
            if l.0 > c.0 || (l.0 == c.0 && l.1 > c.1) {
                cur = i;
            }
        }
        knots.push(Dyadic::from_ticks(s));
        values.push(lines[cur].0.max(0.0));
        let mut t_cur = 0.0;
        let mut last_off = 0;
        loop {
            let (b0, m0) = lines[cur];
            let mut best: Option<(f64, usize)> = None;
            for (i, &(b, m)) in lines.iter().enumerate() {
                if m <= m0 {
                    continue;
                }
                let t = (b0 - b) / (m - m0);
                if t <= t_cur || t >= 1.0 {
                    continue;
                }
                best = match best {
                    Some((bt, bi)) if bt < t || (bt == t && lines[bi].1 >= m) => Some((bt, bi)),
                    _ => Some((t, i)),
                };
            }
            let Some((t, next)) = best else { break };
            if let Some(o) = crossing_offset(t, len) {
                if o > last_off {
                    let tt = o as f64 / len as f64;
                    knots.push(Dyadic::from_ticks(s + o));
                    values.push((b0 + m0 * tt).max(lines[next].0 + lines[next].1 * tt).max(0.0));
                    last_off = o;
                }
            }
            t_cur = t;
            cur = next;
        }
        let (b, m) = lines[cur];
        left_limit = (b + m).max(0.0);
    });
    PiecewiseLinear {
        knots,
        values,
        left_limit,
    }
}

/// Running integral `F(x) = ∫₀ˣ f` of a piecewise-linear or step function.
#[derive(Clone, Debug)]
pub struct Antiderivative {
    knots: Vec<u64>,
    cumulative: Vec<f64>,
    pieces: Vec<(f64, f64)>,
    total: f64,
}

impl Antiderivative {
    pub fn new<F: TorusFunction + ?Sized>(f: &F) -> Self {
        let knots_d = f.knots();
        let pieces = f.sample_pieces(knots_d);
        let knots: Vec<u64> = knots_d.iter().map(|k| k.ticks()).collect();
        let mut cumulative = Vec::with_capacity(knots.len());
        let mut acc = 0.0;
        for (i, &(p, q)) in pieces.iter().enumerate() {
            cumulative.push(acc);
            let (s, e) = piece_bounds(knots_d, i);
            acc += ticks_to_f64(e - s) * 0.5 * (p + q);
        }
        Antiderivative {
            knots,
            cumulative,
            pieces,
            total: acc,
        }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// `∫₀ˣ f` for `x` in ticks, `0 <= x <= 2^60`.
    pub fn at(&self, x: u64) -> f64 {
        if x >= ONE {
            return self.total;
        }
        let i = self.knots.partition_point(|&k| k <= x) - 1;
        let k0 = self.knots[i];
        let k1 = self.knots.get(i + 1).copied().unwrap_or(ONE);
        let (p, q) = self.pieces[i];
        let t = ticks_to_f64(x - k0);
        let l = ticks_to_f64(k1 - k0);
        self.cumulative[i] + p * t + (q - p) * t * t / (2.0 * l)
    }

    /// `∫` over the arc `[a, a + len)`, `len <= 2^60` ticks.
    pub fn arc(&self, a: Dyadic, len: u64) -> f64 {
        if len >= ONE {
            return self.total;
        }
        let s = a.ticks();
        let e = s + len;
        if e <= ONE {
            self.at(e) - self.at(s)
        } else {
            self.total - self.at(s) + self.at(e - ONE)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(num: i64, exp: u32) -> Dyadic {
        Dyadic::new(num, exp).unwrap()
    }

    fn f1() -> PiecewiseLinear {
        PiecewiseLinear::affine(-3f64.sqrt(), 2.0 * 3f64.sqrt())
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn evaluation_examples() {
        let one = PiecewiseLinear::constant(1.0);
        assert_eq!(one.evaluate_f64(0.37), 1.0);
        assert_eq!(f1().evaluate(Dyadic::HALF), 0.0);
        assert_eq!(f1().evaluate_left(Dyadic::ZERO), 3f64.sqrt());
        let hat = PiecewiseLinear::periodic(vec![d(0, 0), d(1, 2), d(1, 1)], vec![0.0, 0.0, 1.0])
            .unwrap();
        assert!(close(hat.evaluate(d(3, 3)), 0.5, 1e-15));
        assert!(close(hat.evaluate(d(3, 2)), 0.5, 1e-15));
    }

    #[test]
    fn inner_product_examples() {
        let one = PiecewiseLinear::constant(1.0);
        let x = PiecewiseLinear::affine(0.0, 1.0);
        assert!(close(inner_product(&one, &one), 1.0, 1e-15));
        assert!(close(inner_product(&f1(), &f1()), 1.0, 1e-15));
        assert!(close(inner_product(&x, &x), 1.0 / 3.0, 1e-15));
        let chi = StepFunction::indicator(Dyadic::ZERO, ONE / 2);
        assert!(close(inner_product(&x, &chi), 1.0 / 8.0, 1e-15));
    }

    #[test]
    fn combine_and_abs() {
        let z = combine(1.0, &f1(), -1.0, &f1());
        assert_eq!(z.sup_norm(), 0.0);
        let a = f1().abs();
        assert!(a.evaluate(Dyadic::HALF).abs() < 1e-12);
        assert!(close(a.evaluate(Dyadic::ZERO), 3f64.sqrt(), 1e-15));
        assert!(close(a.integral(), 3f64.sqrt() / 2.0, 1e-12));
        let left = StepFunction::indicator(Dyadic::ZERO, ONE / 2);
        let right = StepFunction::indicator(Dyadic::HALF, ONE / 2);
        let s = combine_steps(1.0, &left, 1.0, &right).simplify();
        assert_eq!(s, StepFunction::constant(1.0));
    }

    #[test]
    fn norms() {
        assert!(close(PiecewiseLinear::constant(-2.5).lp_norm(3.0).unwrap(), 2.5, 1e-14));
        let chi = StepFunction::indicator(Dyadic::ZERO, ONE / 2);
        for p in [1.5, 2.0, 3.0, 7.0] {
            assert!(close(chi.lp_norm(p).unwrap(), 0.5f64.powf(1.0 / p), 1e-14));
        }
        assert!(chi.lp_norm(1.0).is_err());
        assert!(f1().lp_norm(f64::INFINITY).is_err());
        // ∫|√3(2x-1)|^p = 3^{p/2}/(p+1)
        for p in [1.5, 3.0] {
            let expect = (3f64.powf(p / 2.0) / (p + 1.0)).powf(1.0 / p);
            assert!(close(f1().lp_norm(p).unwrap(), expect, 1e-12));
        }
        assert!(close(f1().lp_norm(2.0).unwrap(), f1().l2_norm(), 1e-13));
    }

    #[test]
    fn abs_power_mean_near_equal() {
        let exact = |a: f64, b: f64, p: f64| (b.powf(p + 1.0) - a.powf(p + 1.0)) / ((p + 1.0) * (b - a));
        let v = abs_power_mean(1.0, 1.0 + 1e-7, 2.5);
        assert!(close(v, exact(1.0f64, 1.0 + 1e-7, 2.5), 1e-9));
        assert!(close(abs_power_mean(2.0, 2.0, 1.7), 2f64.powf(1.7), 1e-15));
        assert!(close(abs_power_mean(1.0, 3.0, 2.0), 13.0 / 3.0, 1e-14));
    }

    #[test]
    fn shifted_grid_steps() {
        let s = StepFunction::from_shifted_grid(2, d(1, 4), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.evaluate(Dyadic::ZERO), 4.0);
        assert_eq!(s.evaluate(d(1, 4)), 1.0);
        assert_eq!(s.evaluate(d(5, 4)), 2.0);
        assert_eq!(s.evaluate(d(15, 4)), 4.0);
        let s = StepFunction::from_shifted_grid(2, d(1, 2), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.knots()[0], Dyadic::ZERO);
        assert_eq!(s.evaluate(Dyadic::ZERO), 4.0);
        assert_eq!(s.knots().len(), 4);
    }

    #[test]
    fn antiderivative_arcs() {
        let x = PiecewiseLinear::affine(0.0, 1.0);
        let f = Antiderivative::new(&x);
        assert!(close(f.total(), 0.5, 1e-15));
        assert!(close(f.arc(d(1, 2), ONE / 2), 0.25, 1e-15));
        // wrap: [3/4, 1) ∪ [0, 1/4)
        assert!(close(f.arc(d(3, 2), ONE / 2), 7.0 / 32.0 + 1.0 / 32.0, 1e-15));
    }

    #[test]
    fn envelope_of_crossing_lines() {
        let a = PiecewiseLinear::affine(-1.0, 2.0);
        let b = PiecewiseLinear::constant(0.5);
        let env = max_abs_envelope(&[(1.0, &a), (1.0, &b)]);
        // max(|2x-1|, 1/2): ∫ = 2·(1/4·1/2) + 2·∫_{3/4}^1 (2x-1) = 1/4 + 2·(3/16)
        assert!(close(env.integral(), 0.25 + 0.375, 1e-12));
        let l2: f64 = {
            // ∫ max(|2x-1|,1/2)^2 = 1/2·1/4 + 2∫_{3/4}^{1}(2x-1)^2 = 1/8 + 2·(1 - 1/8)/6
            0.125 + (1.0 - 0.125) / 3.0
        };
        assert!(close(inner_product(&env, &env), l2, 1e-12));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_pwl(level: u32) -> impl Strategy<Value = PiecewiseLinear> {
            let m = 1usize << level;
            (
                proptest::collection::vec(any::<bool>(), m),
                proptest::collection::vec(-5.0f64..5.0, m + 1),
            )
                .prop_map(move |(keep, vals)| {
                    let mut knots = vec![Dyadic::ZERO];
                    let mut values = vec![vals[0]];
                    for i in 1..m {
                        if keep[i] {
                            knots.push(Dyadic::grid(i as u64, level));
                            values.push(vals[i]);
                        }
                    }
                    PiecewiseLinear::new(knots, values, vals[m]).unwrap()
                })
        }

        proptest! {
            #[test]
            fn combine_matches_pointwise(f in arb_pwl(4), g in arb_pwl(5), a in -3.0f64..3.0, b in -3.0f64..3.0,
                                         xs in proptest::collection::vec(0u64..ONE, 64)) {
                let h = combine(a, &f, b, &g);
                for &k in h.knots() {
                    prop_assert!((h.evaluate(k) - (a * f.evaluate(k) + b * g.evaluate(k))).abs() < 1e-12);
                }
                for x in xs {
                    let x = Dyadic::from_ticks(x);
                    prop_assert!((h.evaluate(x) - (a * f.evaluate(x) + b * g.evaluate(x))).abs() < 1e-11);
                }
                prop_assert!((h.left_limit() - (a * f.left_limit() + b * g.left_limit())).abs() < 1e-12);
            }

            #[test]
            fn inner_product_symmetric_bilinear(f in arb_pwl(3), g in arb_pwl(4), h in arb_pwl(2), a in -2.0f64..2.0) {
                prop_assert!((inner_product(&f, &g) - inner_product(&g, &f)).abs() < 1e-12);
                let lhs = inner_product(&combine(a, &f, 1.0, &h), &g);
                let rhs = a * inner_product(&f, &g) + inner_product(&h, &g);
                prop_assert!((lhs - rhs).abs() < 1e-11);
                prop_assert!((f.l2_norm().powi(2) - inner_product(&f, &f)).abs() < 1e-12);
            }

            #[test]
            fn abs_is_pointwise_abs(f in arb_pwl(4), xs in proptest::collection::vec(0u64..ONE, 64)) {
                let a = f.abs();
                prop_assert!(a.values().iter().all(|v| *v >= 0.0));
                for x in xs {
                    let x = Dyadic::from_ticks(x);
                    prop_assert!((a.evaluate(x) - f.evaluate(x).abs()).abs() < 1e-9);
                }
                prop_assert!((a.integral() - f.l1_norm()).abs() < 1e-12);
                prop_assert!((a.l2_norm() - f.l2_norm()).abs() < 1e-12);
            }

            #[test]
            fn envelope_dominates(f in arb_pwl(3), g in arb_pwl(4), xs in proptest::collection::vec(0u64..ONE, 64)) {
                let e = max_abs_envelope(&[(1.0, &f), (-2.0, &g)]);
                for x in xs {
                    let x = Dyadic::from_ticks(x);
                    let want = f.evaluate(x).abs().max(2.0 * g.evaluate(x).abs());
                    prop_assert!((e.evaluate(x) - want).abs() < 1e-9, "{} vs {}", e.evaluate(x), want);
                }
            }

            #[test]
            fn step_inner_product_is_riemann_sum(vals in proptest::collection::vec(-4.0f64..4.0, 16)) {
                let s = StepFunction::from_shifted_grid(4, Dyadic::ZERO, &vals);
                let riemann: f64 = vals.iter().map(|v| v * v / 16.0).sum();
                prop_assert!((inner_product(&s, &s) - riemann).abs() <= 1e-13 * riemann.max(1.0));
            }
        }
    }
}

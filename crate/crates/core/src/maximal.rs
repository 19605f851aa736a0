//! Hardy–Littlewood, shifted dyadic and four-point maximal functions.
//!
//! An interval `[x - s, x + t)` averages `|f|` to a convex combination of the
//! left average over `[x - s, x)` and the right average over `[x, x + t)`,
//! so `M f(x)` is the larger of the two one-sided suprema. Each one-sided
//! supremum is found exactly by walking the pieces of `|f|` outwards from
//! `x`: on a piece where `|f|` is linear the running average is a ratio of a
//! quadratic and a linear function of the length, maximised in closed form.

use serde::{Deserialize, Serialize};

use crate::mesh::{len_ticks, locate_dyadic, ticks_to_f64, Dyadic};
use crate::haar::natural_level;
use crate::pwl::{piece_bounds, StepFunction, TorusFunction};

/// Relative slack applied to exact point values when they are used as
/// certified bounds.
pub const MARGIN: f64 = 1e-12;

#[derive(Clone, Copy, Debug)]
struct Piece {
    start: f64,
    len: f64,
    v0: f64,
    v1: f64,
}

impl Piece {
    fn at(&self, o: f64) -> f64 {
        self.v0 + (self.v1 - self.v0) * (o / self.len)
    }

    /// `∫` over the first `o` of the piece.
    fn mass_to(&self, o: f64) -> f64 {
        self.v0 * o + (self.v1 - self.v0) * o * o / (2.0 * self.len)
    }
}

/// `|f|` as nonnegative linear pieces covering `[0, 1)`, zero crossings split exactly.
#[derive(Clone, Debug)]
pub struct Profile {
    pieces: Vec<Piece>,
    cumulative: Vec<f64>,
    total: f64,
}

impl Profile {
    pub fn new<F: TorusFunction + ?Sized>(f: &F) -> Self {
        let knots = f.knots();
        let vals = f.sample_pieces(knots);
        let mut pieces = Vec::with_capacity(knots.len() + 8);
        for (i, &(p, q)) in vals.iter().enumerate() {
            let (s, e) = piece_bounds(knots, i);
            let (start, len) = (ticks_to_f64(s), ticks_to_f64(e - s));
            if p * q < 0.0 {
                let z = len * p / (p - q);
                pieces.push(Piece { start, len: z, v0: p.abs(), v1: 0.0 });
                pieces.push(Piece { start: start + z, len: len - z, v0: 0.0, v1: q.abs() });
            } else {
                pieces.push(Piece { start, len, v0: p.abs(), v1: q.abs() });
            }
        }
        pieces.retain(|p| p.len > 0.0);
        Self::from_pieces(pieces)
    }

    fn from_pieces(pieces: Vec<Piece>) -> Self {
        let mut cumulative = Vec::with_capacity(pieces.len());
        let mut acc = 0.0;
        for p in &pieces {
            cumulative.push(acc);
            acc += p.mass_to(p.len);
        }
        Profile {
            pieces,
            cumulative,
            total: acc,
        }
    }

    /// `x ↦ |f|(-x)`.
    fn reflected(&self) -> Self {
        let pieces = self
            .pieces
            .iter()
            .rev()
            .map(|p| Piece {
                start: (1.0 - p.start - p.len).max(0.0),
                len: p.len,
                v0: p.v1,
                v1: p.v0,
            })
            .collect();
        Self::from_pieces(pieces)
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    fn locate(&self, x: f64) -> usize {
        self.pieces.partition_point(|p| p.start <= x).max(1) - 1
    }

    fn mass_to(&self, x: f64) -> f64 {
        if x >= 1.0 {
            return self.total;
        }
        let i = self.locate(x);
        let p = &self.pieces[i];
        self.cumulative[i] + p.mass_to((x - p.start).clamp(0.0, p.len))
    }

    /// `∫` of `|f|` over the arc `[a, a + len)`.
    pub fn arc_mass(&self, a: f64, len: f64) -> f64 {
        if len >= 1.0 {
            return self.total;
        }
        let e = a + len;
        if e <= 1.0 {
            self.mass_to(e) - self.mass_to(a)
        } else {
            self.total - self.mass_to(a) + self.mass_to(e - 1.0)
        }
    }

    /// `sup |f|` over the closed arc `[a, a + len]`.
    pub fn arc_sup(&self, a: f64, len: f64) -> f64 {
        let mut i = self.locate(a);
        let mut best = self.pieces[i].at(a - self.pieces[i].start);
        let mut covered = 0.0;
        let mut first = true;
        while covered < len {
            let p = &self.pieces[i];
            let o = if first { a - p.start } else { 0.0 };
            let avail = p.len - o;
            let take = avail.max(0.0).min(len - covered);
            if take == 0.0 && !first && p.len == 0.0 {
                break;
            }
            best = best.max(p.at(o)).max(p.at(o + take));
            covered += take;
            first = false;
            i = (i + 1) % self.pieces.len();
        }
        best
    }

    /// `sup` over `t ∈ [t_min, 1]` of the average of `|f|` on `[x, x + t)`;
    /// with `t_min = 0` the limit `|f|(x+)` is included.
    fn right_sup(&self, x: f64, t_min: f64) -> f64 {
        let n = self.pieces.len();
        let i0 = self.locate(x);
        let mut best = f64::NEG_INFINITY;
        let mut dist = 0.0;
        let mut mass = 0.0;
        for step in 0..=n {
            let p = &self.pieces[(i0 + step) % n];
            // the segment of this piece reached by the walk
            let (o, len) = if step == 0 {
                let o = x - p.start;
                (o, p.len - o)
            } else if step == n {
                let o0 = self.pieces[i0].start;
                (0.0, x - o0)
            } else {
                (0.0, p.len)
            };
            if len <= 0.0 {
                continue;
            }
            if dist > 0.0 && dist >= t_min && self.total / dist <= best {
                break;
            }
            let alpha = p.at(o);
            let beta = (p.at(o + len) - alpha) / len;
            let lo = (t_min - dist).max(0.0);
            if lo <= len {
                let phi = |tau: f64| (mass + alpha * tau + 0.5 * beta * tau * tau) / (dist + tau);
                best = best.max(if dist + lo > 0.0 { phi(lo) } else { alpha });
                best = best.max(phi(len));
                if beta != 0.0 {
                    let disc = dist * dist - 2.0 * (alpha * dist - mass) / beta;
                    if disc >= 0.0 {
                        let tc = disc.sqrt() - dist;
                        if tc > lo && tc < len {
                            best = best.max(phi(tc));
                        }
                    }
                }
            }
            mass += alpha * len + 0.5 * beta * len * len;
            dist += len;
        }
        best
    }
}

/// Point evaluation of `M f` for one function.
#[derive(Clone, Debug)]
pub struct MaximalEvaluator {
    profile: Profile,
    reflected: Profile,
}

fn mirror(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        1.0 - x
    }
}

impl MaximalEvaluator {
    pub fn new<F: TorusFunction + ?Sized>(f: &F) -> Self {
        let profile = Profile::new(f);
        let reflected = profile.reflected();
        MaximalEvaluator { profile, reflected }
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// `M f(x)`, exact up to rounding.
    pub fn at(&self, x: Dyadic) -> f64 {
        self.at_f64(x.to_f64())
    }

    fn at_f64(&self, x: f64) -> f64 {
        self.profile
            .right_sup(x, 0.0)
            .max(self.reflected.right_sup(mirror(x), 0.0))
    }

    /// Lower bound for `M f` on the whole cell `[x, x + h)`: the suprema over
    /// intervals that contain the cell.
    fn cell_lower(&self, x: f64, h: f64) -> f64 {
        let right = self.profile.right_sup(x, h);
        let end = x + h;
        let end = if end >= 1.0 { end - 1.0 } else { end };
        let left = self.reflected.right_sup(mirror(end), h);
        right.max(left)
    }
}

/// `M f` on the grid `i / 2^level` with certified bounds on every grid cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaximalFunction {
    level: u32,
    /// `M f(i / 2^level)`.
    values: Vec<f64>,
    /// Lower bound of `M f` on `[x_i, x_{i+1})`.
    lower: Vec<f64>,
    /// Upper bound of `M f` on `[x_i, x_{i+1}]`.
    upper: Vec<f64>,
}

impl MaximalFunction {
    /// Samples `M f` at `2^level` grid points; the default grid for shift
    /// resolution `K` is `level = K + 2`.
    pub fn new<F: TorusFunction + ?Sized>(f: &F, level: u32) -> Self {
        Self::from_evaluator(&MaximalEvaluator::new(f), level)
    }

    pub fn from_evaluator(ev: &MaximalEvaluator, level: u32) -> Self {
        let m = 1usize << level;
        let h = ticks_to_f64(len_ticks(level));
        let xs: Vec<f64> = (0..m).map(|i| i as f64 * h).collect();
        let values: Vec<f64> = xs.iter().map(|&x| ev.at_f64(x)).collect();
        let lower: Vec<f64> = xs
            .iter()
            .map(|&x| ev.cell_lower(x, h) * (1.0 - MARGIN))
            .collect();
        let upper: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let inside = ev.profile.arc_sup(x, h);
                values[i].max(values[(i + 1) % m]).max(inside) * (1.0 + MARGIN)
            })
            .collect();
        MaximalFunction {
            level,
            values,
            lower,
            upper,
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn grid_values(&self) -> &[f64] {
        &self.values
    }

    fn cell(&self, x: Dyadic) -> (usize, bool) {
        let shift = crate::mesh::FRAC_BITS - self.level;
        let t = x.ticks();
        ((t >> shift) as usize, t & ((1u64 << shift) - 1) == 0)
    }

    /// A value no larger than `M f(x)`.
    pub fn lower_at(&self, x: Dyadic) -> f64 {
        let (i, on_grid) = self.cell(x);
        if on_grid {
            (self.values[i] * (1.0 - MARGIN)).max(self.lower[i])
        } else {
            self.lower[i]
        }
    }

    /// A value no smaller than `M f(x)`.
    pub fn upper_at(&self, x: Dyadic) -> f64 {
        let (i, on_grid) = self.cell(x);
        if on_grid {
            self.values[i] * (1.0 + MARGIN)
        } else {
            self.upper[i]
        }
    }

    /// Cell-wise lower envelope as a step function.
    pub fn lower_envelope(&self) -> StepFunction {
        StepFunction::from_shifted_grid(self.level, Dyadic::ZERO, &self.lower)
    }

    /// Cell-wise certified upper bound as a step function.
    pub fn upper_envelope(&self) -> StepFunction {
        StepFunction::from_shifted_grid(self.level, Dyadic::ZERO, &self.upper)
    }
}

/// `M f(x)` at a single point.
pub fn maximal_at<F: TorusFunction + ?Sized>(f: &F, x: Dyadic) -> f64 {
    MaximalEvaluator::new(f).at(x)
}

/// `M^d_ξ f`, bracketed on the finest shifted cells. For a step function
/// resolved at that level both bounds coincide.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DyadicMaximal {
    pub level: u32,
    pub lower: StepFunction,
    pub upper: StepFunction,
}

/// Averages of `|f|` over the level-`n` cells of the `ξ`-shifted grid.
fn interval_averages_of(profile: &Profile, level: u32, shift: Dyadic) -> Vec<f64> {
    let h = ticks_to_f64(len_ticks(level));
    (0..1u64 << level)
        .map(|i| profile.arc_mass(shift.add(Dyadic::grid(i, level)).to_f64(), h) / h)
        .collect()
}

/// `M^d_ξ f(x) = sup_{n ≥ 1}` of the average of `|f|` over `I_{n,ξ}(x)`.
pub fn dyadic_maximal<F: TorusFunction + ?Sized>(f: &F, shift: Dyadic) -> DyadicMaximal {
    dyadic_maximal_at_level(f, shift, natural_level(f, shift))
}

pub fn dyadic_maximal_at_level<F: TorusFunction + ?Sized>(f: &F, shift: Dyadic, level: u32) -> DyadicMaximal {
    let profile = Profile::new(f);
    let level = level.max(1);
    let cells = 1usize << level;
    let mut best = vec![0.0f64; cells];
    for n in 1..=level {
        let avg = interval_averages_of(&profile, n, shift);
        let rep = 1usize << (level - n);
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.max(avg[i / rep]);
        }
    }
    let lower = StepFunction::from_shifted_grid(level, shift, &best);
    let upper = if f.is_step() && level >= natural_level(f, shift) {
        lower.clone()
    } else {
        let h = ticks_to_f64(len_ticks(level));
        let vals: Vec<f64> = best
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let a = shift.add(Dyadic::grid(i as u64, level)).to_f64();
                b.max(profile.arc_sup(a, h))
            })
            .collect();
        StepFunction::from_shifted_grid(level, shift, &vals)
    };
    DyadicMaximal {
        level,
        lower,
        upper,
    }
}

/// `M_n f(x, ξ) = M f(a) + M f(-a) + M f(b) + M f(-b)` for `I_{n,ξ}(x) = [a, b)`.
pub fn four_point_maximal(ev: &MaximalEvaluator, x: Dyadic, level: u32, shift: Dyadic) -> f64 {
    let i = locate_dyadic(x, level, shift).expect("level within the grid");
    [i.left, i.left.neg(), i.right, i.right.neg()]
        .iter()
        .map(|&p| ev.at(p))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwl::PiecewiseLinear;

    fn d(num: i64, exp: u32) -> Dyadic {
        Dyadic::new(num, exp).unwrap()
    }

    fn half() -> StepFunction {
        StepFunction::indicator(Dyadic::ZERO, len_ticks(1))
    }

    /// Averages over all arcs with endpoints on a `2^-level` grid containing `x`.
    fn brute_force<F: TorusFunction>(f: &F, x: Dyadic, level: u32) -> f64 {
        let p = Profile::new(f);
        let m = 1u64 << level;
        let h = 1.0 / m as f64;
        let xf = x.to_f64();
        let mut best = 0.0f64;
        for a in 0..m {
            for len in 1..=m {
                let start = a as f64 * h;
                let l = len as f64 * h;
                let off = (xf - start).rem_euclid(1.0);
                if off < l {
                    best = best.max(p.arc_mass(start, l) / l);
                }
            }
        }
        best
    }

    #[test]
    fn examples() {
        let one = PiecewiseLinear::constant(1.0);
        assert!((maximal_at(&one, d(3, 7)) - 1.0).abs() < 1e-15);
        let chi = half();
        assert_eq!(maximal_at(&chi, d(1, 3)), 1.0);
        assert!((maximal_at(&chi, d(3, 2)) - 2.0 / 3.0).abs() < 1e-15);
        assert!((brute_force(&chi, d(3, 2), 7) - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn matches_brute_force() {
        let f = PiecewiseLinear::new(
            vec![Dyadic::ZERO, d(1, 3), d(1, 1), d(13, 4)],
            vec![0.5, -2.0, 1.0, 3.0],
            -1.0,
        )
        .unwrap();
        let ev = MaximalEvaluator::new(&f);
        for i in 0..32 {
            let x = Dyadic::grid(i, 5);
            let exact = ev.at(x);
            let bf = brute_force(&f, x, 8);
            assert!(exact >= bf - 1e-12, "{x}: {exact} < {bf}");
            assert!(exact <= bf + 0.05, "{x}: {exact} vs {bf}");
        }
    }

    #[test]
    fn grid_bounds_bracket_point_values() {
        let f = PiecewiseLinear::new(
            vec![Dyadic::ZERO, d(3, 4), d(5, 4), d(3, 2)],
            vec![2.0, -1.0, 0.0, 4.0],
            1.0,
        )
        .unwrap();
        let mf = MaximalFunction::new(&f, 6);
        let ev = MaximalEvaluator::new(&f);
        for i in 0..1024 {
            let x = Dyadic::grid(i, 10);
            let v = ev.at(x);
            assert!(mf.lower_at(x) <= v && v <= mf.upper_at(x), "{x}");
        }
    }

    #[test]
    fn dyadic_maximal_examples() {
        let one = StepFunction::constant(1.0);
        let dm = dyadic_maximal(&one, d(1, 4));
        assert!(dm.lower.values().iter().all(|v| (v - 1.0).abs() < 1e-15));
        let dm = dyadic_maximal(&half(), Dyadic::ZERO);
        assert_eq!(dm.lower.evaluate(d(1, 3)), 1.0);
        assert_eq!(dm.lower, dm.upper);
        let f = PiecewiseLinear::new(vec![Dyadic::ZERO, d(5, 4)], vec![1.0, -3.0], 0.5).unwrap();
        let ev = MaximalEvaluator::new(&f);
        for xi in [Dyadic::ZERO, d(3, 5)] {
            let dm = dyadic_maximal(&f, xi);
            for i in 0..256 {
                let x = Dyadic::grid(i, 8);
                assert!(dm.lower.evaluate(x) <= ev.at(x) + 1e-12);
                assert!(dm.lower.evaluate(x) <= dm.upper.evaluate(x));
            }
        }
    }

    #[test]
    fn four_point() {
        let one = PiecewiseLinear::constant(1.0);
        let ev = MaximalEvaluator::new(&one);
        assert!((four_point_maximal(&ev, d(3, 3), 2, d(1, 5)) - 4.0).abs() < 1e-14);
        let f = half();
        let ev = MaximalEvaluator::new(&f);
        let want = 2.0 * ev.at(Dyadic::ZERO) + 2.0 * ev.at(Dyadic::HALF);
        assert_eq!(four_point_maximal(&ev, Dyadic::ZERO, 1, Dyadic::ZERO), want);
    }
}

//! Shifted Haar partial sums, increments and the square function.
//!
//! `H_{n,ξ}(f)` is the average of `f` over the level-`n` interval of the
//! `ξ`-shifted dyadic grid, so everything here is computed from interval
//! integrals of an [`Antiderivative`] rather than from Haar coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{len_ticks, ticks_to_f64, Dyadic, MAX_LEVEL};
use crate::pwl::{combine_steps, Antiderivative, StepFunction, TorusFunction};

/// `h_n`: `h_1 = 1`, and for `n - 1 = 2^k + i` with `0 ≤ i < 2^k`,
/// `h_n = ±2^{k/2}` on the two halves of `[i/2^k, (i+1)/2^k)`, positive on the left.
pub fn haar_function(n: usize) -> Result<StepFunction> {
    match n {
        0 => Err(Error::Domain("the Haar system is indexed from n = 1".into())),
        1 => Ok(StepFunction::constant(1.0)),
        _ => {
            let m = n - 1;
            let k = m.ilog2();
            let j = (m - (1 << k)) as u64;
            let amp = (k as f64 / 2.0).exp2();
            let left = Dyadic::grid(2 * j, k + 1);
            let mid = Dyadic::grid(2 * j + 1, k + 1);
            let right = Dyadic::grid(2 * j + 2, k + 1);
            let mut pts = vec![(Dyadic::ZERO, 0.0), (left, amp), (mid, -amp)];
            if right != Dyadic::ZERO {
                pts.push((right, 0.0));
            }
            let mut knots = Vec::new();
            let mut values = Vec::new();
            for (x, v) in pts {
                if knots.last() == Some(&x) {
                    *values.last_mut().unwrap() = v;
                } else {
                    knots.push(x);
                    values.push(v);
                }
            }
            StepFunction::new(knots, values)
        }
    }
}

/// Averages of `f` over the `2^level` intervals of the `ξ`-shifted grid.
pub fn interval_averages(anti: &Antiderivative, level: u32, shift: Dyadic) -> Vec<f64> {
    let len = len_ticks(level);
    let inv = ticks_to_f64(len).recip();
    (0..1u64 << level)
        .map(|i| anti.arc(shift.add(Dyadic::grid(i, level)), len) * inv)
        .collect()
}

fn check_level(level: u32) -> Result<()> {
    if level > 40 {
        return Err(Error::Domain(format!(
            "level {level} is beyond the supported depth (40 < {MAX_LEVEL})"
        )));
    }
    Ok(())
}

/// `H_{n,ξ}(f)`.
pub fn haar_partial_sum<F: TorusFunction + ?Sized>(f: &F, level: u32, shift: Dyadic) -> Result<StepFunction> {
    check_level(level)?;
    let anti = Antiderivative::new(f);
    Ok(StepFunction::from_shifted_grid(
        level,
        shift,
        &interval_averages(&anti, level, shift),
    ))
}

/// `ΔH_{n,ξ}(f) = H_{n,ξ}(f) - H_{n-1,ξ}(f)`, and `H_{0,ξ}(f)` for `n = 0`.
pub fn haar_increment<F: TorusFunction + ?Sized>(f: &F, level: u32, shift: Dyadic) -> Result<StepFunction> {
    let h = haar_partial_sum(f, level, shift)?;
    if level == 0 {
        return Ok(h);
    }
    let coarse = haar_partial_sum(f, level - 1, shift)?;
    Ok(combine_steps(1.0, &h, -1.0, &coarse).simplify())
}

/// All shifted Haar partial sums of one function up to a finest level.
///
/// Beyond `max_level` a step function has no increments left. A
/// piecewise-linear function that is linear on every finest cell still has
/// infinitely many; their squares sum to `s²·4^{-(max_level+1)}/3` on a cell
/// of slope `s`, which [`HaarExpansion::square_function`] adds in closed form.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HaarExpansion {
    shift: Dyadic,
    max_level: u32,
    /// `averages[n][i]`: average over interval `i` of level `n`.
    averages: Vec<Vec<f64>>,
    /// Slopes on the finest cells; `None` for step functions.
    slopes: Option<Vec<f64>>,
    /// Whether `f` is linear (resp. constant) on every finest cell.
    resolved: bool,
}

/// Level at which both `f` and `ξ` are resolved.
pub fn natural_level<F: TorusFunction + ?Sized>(f: &F, shift: Dyadic) -> u32 {
    let res = f.knots().iter().map(|k| k.resolution()).max().unwrap_or(0);
    res.max(shift.resolution()).max(1)
}

impl HaarExpansion {
    /// Expansion down to `max_level`, by default the level resolving `f` and `ξ`.
    pub fn new<F: TorusFunction + ?Sized>(f: &F, shift: Dyadic, max_level: Option<u32>) -> Result<Self> {
        let natural = natural_level(f, shift);
        let max_level = max_level.unwrap_or(natural);
        check_level(max_level)?;
        let anti = Antiderivative::new(f);
        let finest = interval_averages(&anti, max_level, shift);
        let mut averages = vec![finest];
        for _ in 0..max_level {
            let prev = averages.last().unwrap();
            let next: Vec<f64> = prev.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect();
            averages.push(next);
        }
        averages.reverse();
        let resolved = max_level >= natural;
        let slopes = (!f.is_step()).then(|| {
            let len = len_ticks(max_level);
            let h = ticks_to_f64(len);
            (0..1u64 << max_level)
                .map(|i| {
                    let a = shift.add(Dyadic::grid(i, max_level));
                    let b = a.add_ticks(len);
                    (f.evaluate_left(b) - f.evaluate(a)) / h
                })
                .collect()
        });
        Ok(HaarExpansion {
            shift,
            max_level,
            averages,
            slopes,
            resolved,
        })
    }

    pub fn shift(&self) -> Dyadic {
        self.shift
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    pub fn is_resolved(&self) -> bool {
        self.resolved
    }

    /// `H_{0,ξ}(f) = ∫f`.
    pub fn mean(&self) -> f64 {
        self.averages[0][0]
    }

    pub fn averages(&self, level: u32) -> &[f64] {
        &self.averages[level as usize]
    }

    pub fn partial_sum(&self, level: u32) -> StepFunction {
        let l = level.min(self.max_level);
        StepFunction::from_shifted_grid(l, self.shift, &self.averages[l as usize])
    }

    /// Values of `ΔH_{n,ξ}(f)` on the level-`n` cells, `n ≤ max_level`.
    pub fn increment_values(&self, level: u32) -> Vec<f64> {
        assert!(level <= self.max_level, "level {level} beyond the expansion");
        if level == 0 {
            return self.averages[0].clone();
        }
        let fine = &self.averages[level as usize];
        let coarse = &self.averages[level as usize - 1];
        fine.iter()
            .enumerate()
            .map(|(i, v)| v - coarse[i / 2])
            .collect()
    }

    pub fn increment(&self, level: u32) -> StepFunction {
        if level > self.max_level {
            return StepFunction::constant(0.0);
        }
        StepFunction::from_shifted_grid(level, self.shift, &self.increment_values(level))
    }

    /// `Σ_{1 ≤ n ≤ m} |ΔH_{n,ξ}|²` on the level-`m` cells.
    fn truncated_square(&self, m: u32) -> Vec<f64> {
        let mut sq = vec![0.0; 1 << m];
        for n in 1..=m {
            let inc = self.increment_values(n);
            let rep = 1usize << (m - n);
            for (i, s) in sq.iter_mut().enumerate() {
                *s += inc[i / rep].powi(2);
            }
        }
        sq
    }

    /// `S_ξ(f)` with the closed-form tail of the linear pieces.
    pub fn square_function(&self) -> StepFunction {
        let mut sq = self.truncated_square(self.max_level);
        if let Some(slopes) = &self.slopes {
            let tail = 4f64.powi(-(self.max_level as i32 + 1)) / 3.0;
            for (s, sl) in sq.iter_mut().zip(slopes) {
                *s += sl * sl * tail;
            }
        }
        let vals: Vec<f64> = sq.into_iter().map(f64::sqrt).collect();
        StepFunction::from_shifted_grid(self.max_level, self.shift, &vals)
    }

    /// `(Σ_{1 ≤ n ≤ level} |ΔH_{n,ξ}|²)^{1/2}`, no tail.
    pub fn truncated_square_function(&self, level: u32) -> StepFunction {
        let l = level.min(self.max_level);
        let sq = self.truncated_square(l);
        let vals: Vec<f64> = sq.into_iter().map(f64::sqrt).collect();
        StepFunction::from_shifted_grid(l, self.shift, &vals)
    }
}

/// `S_ξ(f)`.
pub fn square_function<F: TorusFunction + ?Sized>(f: &F, shift: Dyadic) -> Result<StepFunction> {
    Ok(HaarExpansion::new(f, shift, None)?.square_function())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwl::{inner_product, PiecewiseLinear};

    fn d(num: i64, exp: u32) -> Dyadic {
        Dyadic::new(num, exp).unwrap()
    }

    fn half_sign() -> StepFunction {
        StepFunction::new(vec![Dyadic::ZERO, Dyadic::HALF], vec![1.0, -1.0]).unwrap()
    }

    #[test]
    fn partial_sum_examples() {
        let x = PiecewiseLinear::affine(0.0, 1.0);
        let h = haar_partial_sum(&x, 1, Dyadic::ZERO).unwrap();
        assert_eq!(h.values(), &[0.25, 0.75]);
        let c = haar_partial_sum(&PiecewiseLinear::constant(2.5), 3, d(3, 4)).unwrap();
        assert!(c.values().iter().all(|v| (v - 2.5).abs() < 1e-15));
        let chi = StepFunction::indicator(Dyadic::ZERO, len_ticks(1));
        let h = haar_partial_sum(&chi, 2, d(1, 2)).unwrap();
        for (x, want) in [(d(1, 2), 1.0), (d(1, 1), 0.0), (d(3, 2), 0.0), (Dyadic::ZERO, 1.0)] {
            assert_eq!(h.evaluate(x), want);
        }
    }

    #[test]
    fn increments_of_the_half_sign() {
        let h = half_sign();
        assert_eq!(haar_increment(&h, 1, Dyadic::ZERO).unwrap(), h);
        for n in 2..6 {
            assert_eq!(
                haar_increment(&h, n, Dyadic::ZERO).unwrap().values(),
                &[0.0]
            );
        }
        assert_eq!(haar_increment(&StepFunction::constant(3.0), 2, d(1, 3)).unwrap().sup_norm(), 0.0);
        let s = square_function(&h, Dyadic::ZERO).unwrap();
        assert!(s.values().iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn haar_functions_are_orthonormal() {
        let hs: Vec<StepFunction> = (1..=32).map(|n| haar_function(n).unwrap()).collect();
        for (i, a) in hs.iter().enumerate() {
            for (j, b) in hs.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((inner_product(a, b) - want).abs() < 1e-14);
            }
        }
        assert_eq!(haar_function(2).unwrap(), half_sign());
    }

    #[test]
    fn partial_sums_agree_with_haar_coefficients() {
        let f = PiecewiseLinear::periodic(
            (0..8).map(|i| Dyadic::grid(i, 3)).collect(),
            vec![0.3, -1.0, 2.0, 0.5, 0.0, 1.5, -0.7, 0.2],
        )
        .unwrap();
        let hs: Vec<StepFunction> = (1..=16).map(|n| haar_function(n).unwrap()).collect();
        let e = HaarExpansion::new(&f, Dyadic::ZERO, Some(4)).unwrap();
        let h4 = e.partial_sum(4);
        for i in 0..64 {
            let x = Dyadic::grid(i, 6);
            let direct: f64 = hs.iter().map(|h| inner_product(&f, h) * h.evaluate(x)).sum();
            assert!((h4.evaluate(x) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn pythagoras_with_linear_tail() {
        let f = PiecewiseLinear::periodic(
            (0..16).map(|i| Dyadic::grid(i, 4)).collect(),
            (0..16).map(|i| ((i * 5) % 7) as f64 - 3.0).collect(),
        )
        .unwrap();
        for xi in [Dyadic::ZERO, d(3, 6), d(5, 8)] {
            let e = HaarExpansion::new(&f, xi, None).unwrap();
            let s = e.square_function();
            let var = f.l2_norm().powi(2) - e.mean().powi(2);
            assert!((s.l2_norm().powi(2) - var).abs() < 1e-12, "{xi}");
        }
    }

    #[test]
    fn averages_partition_the_integral() {
        let f = PiecewiseLinear::new(vec![Dyadic::ZERO, d(3, 5)], vec![1.0, -2.0], 4.0).unwrap();
        let total = f.integral();
        for xi in [Dyadic::ZERO, d(1, 3), d(7, 9)] {
            let e = HaarExpansion::new(&f, xi, None).unwrap();
            for n in 0..=e.max_level() {
                let s: f64 = e.averages(n).iter().sum::<f64>() / (1u64 << n) as f64;
                assert!((s - total).abs() < 1e-13);
            }
        }
    }
}

//! Numerical checks of the inequalities, growth searches and convergence demos.
//!
//! Every experiment returns an [`ExperimentReport`]. Randomized work is split
//! into independent items, each seeded from `(seed, item)` so results do not
//! depend on scheduling.

pub mod block;
pub mod convergence;
pub mod cww;
pub mod growth;
pub mod lemmas;
pub mod main_lemma;
pub mod multiplier;
pub mod report;

pub use report::{Check, ExperimentReport, Table, Verdict};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::franklin::mesh_function;
use crate::pwl::PiecewiseLinear;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for one work item, derived from the run seed and the item path.
pub fn item_rng(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix(seed);
    for &p in path {
        h = splitmix(h ^ p.wrapping_mul(0xd6e8_feb8_6659_fd93));
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Independent standard normal entries.
pub fn normal_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Standard normal entries scaled to unit Euclidean norm.
pub fn unit_normal<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut v = normal_vec(rng, n);
    let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
    v
}

/// A random continuous function on the `2^-level` mesh (an element of `L̄_{2^level}`).
pub fn random_mesh_function<R: Rng>(rng: &mut R, level: u32) -> Result<PiecewiseLinear> {
    mesh_function(level, normal_vec(rng, 1 << level))
}

/// Least-squares line with its coefficient of determination.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

/// `max / min` of a list of positive constants.
pub fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

//! Block maxima `δ_k = max_{2^k < n ≤ 2^{k+1}} |S_n − S_{2^k}|` of series in
//! non-overlapping Franklin polynomials, computed exactly on piecewise-linear
//! functions.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::multiplier::{series_test, PowerLog, SeriesTest, Summability};
use super::{item_rng, unit_normal, ExperimentReport, Table};
use crate::error::{Error, Result};
use crate::franklin::{FranklinBasis, Variant};
use crate::pwl::{linear_combination, max_abs_envelope, PiecewiseLinear};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum CoefficientRule {
    /// `a_k = k^{-alpha} (ln(k + 1))^{-beta}`.
    PowerLog { alpha: f64, beta: f64 },
    Zero,
    /// One nonzero coefficient `a_index = 1`.
    Single { index: usize },
}

impl Default for CoefficientRule {
    fn default() -> Self {
        CoefficientRule::PowerLog { alpha: 0.5, beta: 1.1 }
    }
}

impl CoefficientRule {
    pub fn coefficient(&self, k: usize) -> f64 {
        match *self {
            CoefficientRule::PowerLog { alpha, beta } => {
                let k = k as f64;
                k.powf(-alpha) * (k + 1.0).ln().powf(-beta)
            }
            CoefficientRule::Zero => 0.0,
            CoefficientRule::Single { index } => f64::from(u8::from(k == index)),
        }
    }

    /// Asymptotic form of `a_k²` (with `ln(k + 1) ≈ ln 2 · log₂ k`).
    fn squared_asymptotic(&self) -> Option<PowerLog> {
        match *self {
            CoefficientRule::PowerLog { alpha, beta } => Some(PowerLog {
                scale: std::f64::consts::LN_2.powf(-2.0 * beta),
                power: -2.0 * alpha,
                log_power: -2.0 * beta,
                loglog_power: 0.0,
            }),
            _ => None,
        }
    }
}

/// How the polynomials `p_n` are formed from the classical Franklin system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "system")]
pub enum PolynomialRule {
    /// `p_n = f_{n−1}`.
    Identity,
    /// `p_n = f_{π(n)}` for a seeded permutation of the first `2^{K+1}` indices.
    Rearranged,
    /// Disjoint random index sets of sizes `1..=max_terms`, unit-normal coefficients.
    Polynomials { max_terms: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub blocks: u32,
    pub coefficients: CoefficientRule,
    pub system: PolynomialRule,
    /// Multiplier `w` for the hypothesis `Σ a_k² w(k) < ∞`.
    pub w: PowerLog,
    pub tail_cutoff: u64,
    /// Bound on the last increment of `Σ ‖δ_k‖²`.
    pub max_last_increment: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            blocks: 10,
            coefficients: CoefficientRule::default(),
            system: PolynomialRule::Identity,
            w: PowerLog::log(),
            tail_cutoff: 1 << 20,
            max_last_increment: 1e-3,
        }
    }
}

/// `p_n` for `n = 1..=count` as lists of `(basis index, coefficient)`.
pub fn polynomials(rule: PolynomialRule, count: usize, seed: u64) -> Vec<Vec<(usize, f64)>> {
    let mut rng = item_rng(seed, &[0x706f6c79]);
    match rule {
        PolynomialRule::Identity => (0..count).map(|j| vec![(j, 1.0)]).collect(),
        PolynomialRule::Rearranged => {
            let mut idx: Vec<usize> = (0..count).collect();
            idx.shuffle(&mut rng);
            idx.into_iter().map(|j| vec![(j, 1.0)]).collect()
        }
        PolynomialRule::Polynomials { max_terms } => {
            let max_terms = max_terms.max(1);
            let mut pool: Vec<usize> = (0..count * max_terms).collect();
            pool.shuffle(&mut rng);
            let mut it = pool.into_iter();
            (0..count)
                .map(|_| {
                    let size = rng.random_range(1..=max_terms);
                    let c = unit_normal(&mut rng, size);
                    it.by_ref().take(size).zip(c).collect()
                })
                .collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRow {
    pub k: u32,
    pub delta_sq: f64,
    /// `Σ_{2^k < j ≤ 2^{k+1}} a_j²`.
    pub block_mass: f64,
    pub delta_sum: f64,
    /// `Σ_{j ≤ 2^{k+1}} a_j² log₂ j`.
    pub bound_sum: f64,
}

/// `‖δ_k‖₂²` for one block; `p` holds the realized polynomials `a_n p_n`.
fn block_delta(terms: &[PiecewiseLinear]) -> f64 {
    let mut sum = PiecewiseLinear::constant(0.0);
    let mut env = PiecewiseLinear::constant(0.0);
    for t in terms {
        sum = linear_combination(&[(1.0, &sum), (1.0, t)]);
        env = max_abs_envelope(&[(1.0, &env), (1.0, &sum)]);
    }
    let n = env.l2_norm();
    n * n
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceDemo {
    pub rows: Vec<BlockRow>,
    pub tail: Option<SeriesTest>,
}

pub fn run_convergence(cfg: &ConvergenceConfig, seed: u64) -> Result<ConvergenceDemo> {
    if cfg.blocks == 0 || cfg.blocks > 12 {
        return Err(Error::Config(format!("blocks must be in 1..=12, got {}", cfg.blocks)));
    }
    if let CoefficientRule::PowerLog { alpha, beta } = cfg.coefficients {
        if !(alpha.is_finite() && beta.is_finite()) {
            return Err(Error::Config("coefficient exponents must be finite".into()));
        }
    }
    let count = 1usize << (cfg.blocks + 1);
    let polys = polynomials(cfg.system, count, seed);
    let top = polys.iter().flatten().map(|t| t.0).max().unwrap_or(0);
    let basis = FranklinBasis::with_max(Variant::Classical, top)?;
    let a: Vec<f64> = (1..=count).map(|n| cfg.coefficients.coefficient(n)).collect();
    let realize = |n: usize| -> PiecewiseLinear {
        let terms: Vec<(f64, &PiecewiseLinear)> =
            polys[n - 1].iter().map(|&(j, c)| (a[n - 1] * c, basis.function(j))).collect();
        linear_combination(&terms)
    };
    let deltas: Vec<f64> = (1..=cfg.blocks)
        .into_par_iter()
        .map(|k| {
            let lo = 1usize << k;
            let block: Vec<PiecewiseLinear> = (lo + 1..=2 * lo).map(realize).collect();
            block_delta(&block)
        })
        .collect();
    let mut rows = Vec::new();
    let mut delta_sum = 0.0;
    for (k, d) in (1..=cfg.blocks).zip(deltas) {
        let lo = 1usize << k;
        delta_sum += d;
        let bound_sum = (2..=2 * lo).map(|j| a[j - 1] * a[j - 1] * (j as f64).log2()).sum();
        rows.push(BlockRow {
            k,
            delta_sq: d,
            block_mass: (lo + 1..=2 * lo).map(|j| a[j - 1] * a[j - 1]).sum(),
            delta_sum,
            bound_sum,
        });
    }
    let tail = cfg
        .coefficients
        .squared_asymptotic()
        .map(|a2| series_test(a2.mul(cfg.w), cfg.tail_cutoff));
    Ok(ConvergenceDemo { rows, tail })
}

impl ConvergenceDemo {
    pub fn report(&self, cfg: &ConvergenceConfig, seed: u64) -> ExperimentReport {
        let mut rep = ExperimentReport::new("convergence", "d2", seed);
        rep.config("blocks", cfg.blocks)
            .config("coefficients", cfg.coefficients)
            .config("system", cfg.system)
            .config("w", cfg.w.to_string())
            .config("log_base", 2);
        let mut t = Table::new("blocks", &["k", "delta_sq", "block_mass", "delta_sum", "bound_sum"]);
        for r in &self.rows {
            t.push(vec![r.k as f64, r.delta_sq, r.block_mass, r.delta_sum, r.bound_sum]);
        }
        let last = self.rows.last().expect("at least one block");
        rep.constant("last_increment", last.delta_sq)
            .constant("delta_sum", last.delta_sum)
            .constant("bound_sum", last.bound_sum);
        let ratio = self
            .rows
            .iter()
            .filter(|r| r.block_mass > 0.0)
            .map(|r| r.delta_sq / (r.k as f64 * r.block_mass))
            .fold(0.0, f64::max);
        rep.constant("max_delta_over_k_mass", ratio);
        match &self.tail {
            Some(tail) => {
                rep.config("tail_test", tail.verdict);
                rep.constant("tail_partial_sum", tail.partial_sum);
                if let Some((lo, hi)) = tail.bracket {
                    rep.constant("tail_sum_lower", lo).constant("tail_sum_upper", hi);
                }
                if tail.verdict != Summability::Converges {
                    rep.note(format!(
                        "warning: Σ a_k² w(k) is {} at cutoff {}; the hypothesis is not confirmed",
                        tail.verdict, tail.cutoff
                    ));
                }
            }
            None => {
                rep.config("tail_test", "finite support");
            }
        }
        let dominated = self.rows.iter().all(|r| r.delta_sum <= r.bound_sum * (1.0 + 1e-12) + 1e-300);
        rep.check(
            "bound_dominates",
            dominated,
            "Σ_{k' ≤ k} ‖δ_k'‖² ≤ Σ_{j ≤ 2^{k+1}} a_j² log₂ j at every k",
        );
        rep.check(
            "levels_off",
            last.delta_sq < cfg.max_last_increment,
            format!("increment {:.3e} at k = {} (limit {:e})", last.delta_sq, last.k, cfg.max_last_increment),
        );
        rep.table(t);
        rep.finish()
    }
}

/// Runs the demo and assembles its report.
pub fn demo_convergence(cfg: &ConvergenceConfig, seed: u64) -> Result<ExperimentReport> {
    let t = std::time::Instant::now();
    let mut rep = run_convergence(cfg, seed)?.report(cfg, seed);
    rep.runtime_ms = t.elapsed().as_millis() as u64;
    Ok(rep)
}

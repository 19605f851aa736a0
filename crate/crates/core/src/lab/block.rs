//! `‖Σ_{n ∈ block k} |a_n u_n|‖₂ ≲ ‖a‖₂`, uniformly in `k`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{item_rng, linear_fit, unit_normal, ExperimentReport, Table};
use crate::error::{Error, Result};
use crate::franklin::{FranklinBasis, Variant};
use crate::pwl::{abs_sum, PiecewiseLinear};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockConfig {
    pub k_min: u32,
    pub k_max: u32,
    pub trials: usize,
    /// Largest accepted slope of `ln(max ratio)` against `k`.
    pub max_slope: f64,
    /// First block used in the trend fit. The block k = 1 holds two
    /// functions and sits well below the plateau, so short sweeps that
    /// include it show a spurious upward slope.
    pub trend_from: u32,
}

impl Default for BlockConfig {
    fn default() -> Self {
        BlockConfig {
            k_min: 1,
            k_max: 8,
            trials: 100,
            max_slope: 0.05,
            trend_from: 2,
        }
    }
}

/// `‖Σ |a_n u_n|‖₂ / ‖a‖₂` for coefficients on the indices `first, first + 1, …`.
pub fn block_ratio(basis: &FranklinBasis, first: usize, a: &[f64]) -> f64 {
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    let terms: Vec<(f64, &PiecewiseLinear)> = a
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(i, &c)| (c, basis.function(first + i)))
        .collect();
    abs_sum(&terms).l2_norm() / norm
}

pub fn verify_block_bound(cfg: &BlockConfig, seed: u64) -> Result<ExperimentReport> {
    if cfg.k_min < 1 || cfg.k_max < cfg.k_min || cfg.trials == 0 {
        return Err(Error::Config("block bound needs 1 ≤ k_min ≤ k_max and trials > 0".into()));
    }
    let basis = FranklinBasis::with_max(Variant::Reconstructed, 1 << (cfg.k_max + 1))?;
    let mut rep = ExperimentReport::new("block_bound", "x5", seed);
    rep.config("k_min", cfg.k_min)
        .config("k_max", cfg.k_max)
        .config("trials", cfg.trials)
        .config("system", "u")
        .config("coefficients", "standard normal, normalized");
    let mut table = Table::new("ratios", &["k", "max_ratio", "mean_ratio", "equal_weights"]);
    let mut ks = Vec::new();
    let mut logs = Vec::new();
    for k in cfg.k_min..=cfg.k_max {
        let first = (1usize << k) + 1;
        let size = 1usize << k;
        let ratios: Vec<f64> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = item_rng(seed, &[k as u64, t as u64]);
                block_ratio(&basis, first, &unit_normal(&mut rng, size))
            })
            .collect();
        let max = ratios.iter().copied().fold(0.0, f64::max);
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let equal = block_ratio(&basis, first, &vec![1.0; size]);
        rep.constant(&format!("max_ratio_k{k}"), max);
        table.push(vec![k as f64, max, mean, equal]);
        ks.push(k as f64);
        logs.push(max.ln());
    }
    let single = block_ratio(&basis, 1 << cfg.k_min | 1, &[1.0]);
    rep.constant("single_coefficient_ratio", single);
    rep.check(
        "single_coefficient",
        (single - 1.0).abs() < 1e-12,
        format!("ratio {single}"),
    );
    let overall = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max).exp();
    rep.constant("max_ratio", overall);
    if let Some(all) = linear_fit(&ks, &logs) {
        rep.constant("log_ratio_slope_all", all.slope);
    }
    let from = ks.iter().position(|&k| k >= cfg.trend_from as f64).filter(|&i| ks.len() - i >= 2).unwrap_or(0);
    rep.config("trend_from", ks[from] as u32);
    match linear_fit(&ks[from..], &logs[from..]) {
        Some(fit) => {
            rep.constant("log_ratio_slope", fit.slope);
            rep.check(
                "bounded_trend",
                fit.slope <= cfg.max_slope,
                format!("slope {:.4} vs limit {}", fit.slope, cfg.max_slope),
            );
        }
        None => {
            rep.note("a single block gives no trend");
        }
    }
    rep.table(table);
    Ok(rep.finish())
}

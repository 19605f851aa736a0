//! `‖sup_λ S_ξ(Σ λ_k b_k u_k)‖₂ ≲ ‖f‖₂` for some shift `ξ`, with the sup
//! over `|λ_k| ≤ 1` replaced by sampled patterns.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{item_rng, normal_vec, ExperimentReport, Table};
use crate::error::{Error, Result};
use crate::franklin::{FranklinBasis, UExpansion, Variant};
use crate::haar::HaarExpansion;
use crate::maximal::MaximalEvaluator;
use crate::mesh::{Dyadic, ShiftGrid, FRAC_BITS};
use crate::pwl::{abs_sum, linear_combination, max_steps, PiecewiseLinear, StepFunction};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MainLemmaConfig {
    /// Random functions `f = Σ_{k=2}^{2^levels} b_k u_k`.
    pub functions: usize,
    pub levels: u32,
    pub xi_resolution: u32,
    /// Random `±1` patterns per function.
    pub sign_patterns: usize,
    /// Random patterns uniform in `[-1, 1]` per function.
    pub continuous_patterns: usize,
    /// Grid for the maximal functions in the `A`/`B` terms of the proof.
    pub grid_level: u32,
    pub max_cv: f64,
    pub scale: f64,
}

impl Default for MainLemmaConfig {
    fn default() -> Self {
        MainLemmaConfig {
            functions: 50,
            levels: 8,
            xi_resolution: 4,
            sign_patterns: 8,
            continuous_patterns: 4,
            grid_level: 9,
            max_cv: 0.5,
            scale: 1.0,
        }
    }
}

/// Per-function outcome.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MainLemmaSample {
    /// `‖sup_λ S_ξ(f_λ)‖₂ / ‖f‖₂` for each `ξ` of the grid.
    pub ratios: Vec<f64>,
    pub min: f64,
    pub rms: f64,
    pub max: f64,
    /// The same sup restricted to the non-continuous patterns.
    pub discrete_min: f64,
    /// `∫ B(f) / ‖f‖²`.
    pub b_term: f64,
    /// `E_ξ ∫ A(f)(·, ξ) / ‖f‖²`.
    pub a_term: f64,
}

/// The patterns: all ones, one indicator per dyadic block, random signs,
/// random values in `[-1, 1]`. The flag marks continuous ones.
fn patterns<R: Rng>(rng: &mut R, cfg: &MainLemmaConfig) -> Vec<(bool, Vec<f64>)> {
    let size = 1usize << cfg.levels;
    let mut out = vec![(false, vec![1.0; size])];
    for m in 1..=cfg.levels {
        let mut v = vec![0.0; size];
        for j in UExpansion::block(m) {
            v[j - 1] = 1.0;
        }
        out.push((false, v));
    }
    for _ in 0..cfg.sign_patterns {
        out.push((false, (0..size).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()));
    }
    for _ in 0..cfg.continuous_patterns {
        out.push((true, (0..size).map(|_| rng.random_range(-1.0..=1.0)).collect()));
    }
    out
}

fn combination(basis: &FranklinBasis, b: &[f64]) -> PiecewiseLinear {
    let terms: Vec<(f64, &PiecewiseLinear)> = b
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(i, &c)| (c, basis.function(i + 1)))
        .collect();
    linear_combination(&terms)
}

/// The `A` and `B` integrands of the proof, from `M(Σ_{block m} |b_k u_k|)` on a grid.
fn proof_terms(basis: &FranklinBasis, b: &[f64], levels: u32, grid_level: u32, xi: &ShiftGrid) -> (f64, f64) {
    let g = 1usize << grid_level;
    let mf: Vec<Vec<f64>> = (1..=levels)
        .map(|m| {
            let terms: Vec<(f64, &PiecewiseLinear)> =
                UExpansion::block(m).map(|j| (b[j - 1], basis.function(j))).collect();
            let ev = MaximalEvaluator::new(&abs_sum(&terms));
            (0..g as u64).map(|i| ev.at(Dyadic::grid(i, grid_level))).collect()
        })
        .collect();
    let top = levels + grid_level;
    // B(x) = Σ_n (Σ_{m ≤ n} 2^{m-n} M F_m(x))² on the grid
    let mut b_int = 0.0;
    for i in 0..g {
        let mut s = 0.0;
        for n in 1..=top {
            let inner: f64 = (1..=n.min(levels))
                .map(|m| 2f64.powi(m as i32 - n as i32) * mf[m as usize - 1][i])
                .sum();
            s += inner * inner;
        }
        b_int += s;
    }
    b_int /= g as f64;
    // A(x, ξ) = Σ_n (Σ_{m > n} 2^{n-m} M_n F_m(x, ξ))², constant on the level-n cells
    let at = |m: u32, d: Dyadic| mf[m as usize - 1][(d.ticks() >> (FRAC_BITS - grid_level)) as usize];
    let mut a_int = 0.0;
    for s in xi.shifts() {
        for n in 1..levels {
            let h = 2f64.powi(-(n as i32));
            for c in 0..1u64 << n {
                let a = s.add(Dyadic::grid(c, n));
                let e = a.add(Dyadic::grid(1, n));
                let inner: f64 = (n + 1..=levels)
                    .map(|m| 2f64.powi(n as i32 - m as i32) * (at(m, a) + at(m, a.neg()) + at(m, e) + at(m, e.neg())))
                    .sum();
                a_int += h * inner * inner;
            }
        }
    }
    a_int /= xi.len() as f64;
    (a_int, b_int)
}

/// One function through the whole pipeline.
pub fn main_lemma_sample(
    basis: &FranklinBasis,
    b: &[f64],
    pats: &[(bool, Vec<f64>)],
    cfg: &MainLemmaConfig,
) -> Result<MainLemmaSample> {
    let norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let fs: Vec<(bool, PiecewiseLinear)> = pats
        .iter()
        .map(|(cont, lam)| {
            let bl: Vec<f64> = b.iter().zip(lam).map(|(x, l)| x * l).collect();
            (*cont, combination(basis, &bl))
        })
        .collect();
    let grid = ShiftGrid::new(cfg.xi_resolution)?;
    let mut ratios = Vec::with_capacity(grid.len());
    let mut discrete = Vec::with_capacity(grid.len());
    for xi in grid.shifts() {
        let sq: Vec<(bool, StepFunction)> = fs
            .iter()
            .map(|(c, f)| Ok((*c, HaarExpansion::new(f, xi, None)?.square_function())))
            .collect::<Result<_>>()?;
        let all: Vec<&StepFunction> = sq.iter().map(|s| &s.1).collect();
        let disc: Vec<&StepFunction> = sq.iter().filter(|s| !s.0).map(|s| &s.1).collect();
        let r = if norm > 0.0 { max_steps(&all).l2_norm() / norm } else { 0.0 };
        let d = if norm > 0.0 { max_steps(&disc).l2_norm() / norm } else { 0.0 };
        ratios.push(r);
        discrete.push(d);
    }
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().copied().fold(0.0, f64::max);
    let rms = (ratios.iter().map(|r| r * r).sum::<f64>() / ratios.len() as f64).sqrt();
    let (a, bt) = if norm > 0.0 {
        let (a, bt) = proof_terms(basis, b, cfg.levels, cfg.grid_level, &grid);
        (a / (norm * norm), bt / (norm * norm))
    } else {
        (0.0, 0.0)
    };
    Ok(MainLemmaSample {
        min,
        rms,
        max,
        discrete_min: discrete.iter().copied().fold(f64::INFINITY, f64::min),
        ratios,
        b_term: bt,
        a_term: a,
    })
}

pub fn verify_main_lemma(cfg: &MainLemmaConfig, seed: u64) -> Result<ExperimentReport> {
    if cfg.functions < 2 || cfg.levels < 2 || cfg.levels > 10 || !(cfg.scale > 0.0) {
        return Err(Error::Config("main lemma needs ≥ 2 functions, levels in 2..=10, positive scale".into()));
    }
    if cfg.grid_level < cfg.levels.max(cfg.xi_resolution) || cfg.grid_level > 14 {
        return Err(Error::Config("grid_level must cover levels and xi_resolution, at most 14".into()));
    }
    let size = 1usize << cfg.levels;
    let basis = FranklinBasis::with_max(Variant::Reconstructed, size)?;
    let mut rep = ExperimentReport::new("main_lemma", "x10", seed);
    rep.config("functions", cfg.functions)
        .config("levels", cfg.levels)
        .config("xi_resolution", cfg.xi_resolution)
        .config("sign_patterns", cfg.sign_patterns)
        .config("continuous_patterns", cfg.continuous_patterns)
        .config("grid_level", cfg.grid_level)
        .config("scale", cfg.scale)
        .config("coefficients", "b_2..b_N standard normal, normalized; b_1 = 0")
        .config("patterns", "all ones, block indicators, random signs, uniform [-1,1]");
    let samples: Vec<MainLemmaSample> = (0..cfg.functions)
        .into_par_iter()
        .map(|i| {
            let mut rng = item_rng(seed, &[i as u64]);
            let mut b = normal_vec(&mut rng, size);
            b[0] = 0.0;
            let s = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            b.iter_mut().for_each(|x| *x *= cfg.scale / s);
            let pats = patterns(&mut rng, cfg);
            main_lemma_sample(&basis, &b, &pats, cfg)
        })
        .collect::<Result<_>>()?;

    let mins: Vec<f64> = samples.iter().map(|s| s.min).collect();
    let mean = mins.iter().sum::<f64>() / mins.len() as f64;
    let sd = (mins.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (mins.len() - 1) as f64).sqrt();
    let cv = sd / mean;
    let worst = mins.iter().copied().fold(0.0, f64::max);
    let ordered = samples.iter().all(|s| s.min <= s.rms * (1.0 + 1e-12) && s.rms <= s.max * (1.0 + 1e-12));
    let gain = samples
        .iter()
        .map(|s| s.min / s.discrete_min)
        .fold(0.0, f64::max);
    rep.constant("max_min_ratio", worst)
        .constant("mean_min_ratio", mean)
        .constant("cv_min_ratio", cv)
        .constant("max_rms_ratio", samples.iter().map(|s| s.rms).fold(0.0, f64::max))
        .constant("max_b_term", samples.iter().map(|s| s.b_term).fold(0.0, f64::max))
        .constant("max_a_term", samples.iter().map(|s| s.a_term).fold(0.0, f64::max))
        .constant("continuous_pattern_gain", gain);

    // the lone u_2
    let mut single = vec![0.0; size];
    single[1] = cfg.scale;
    let one = main_lemma_sample(&basis, &single, &[(false, vec![1.0; size])], cfg)?;
    rep.constant("u2_min_ratio", one.min);

    rep.check(
        "finite_ratio",
        mins.iter().all(|m| m.is_finite() && *m > 0.0),
        format!("largest min-ξ ratio {worst:.4}"),
    );
    rep.check("ratio_spread", cv <= cfg.max_cv, format!("CV {cv:.4} (limit {})", cfg.max_cv));
    rep.check("xi_average_bound", ordered, "min_ξ ≤ (E_ξ r²)^{1/2} ≤ max_ξ for every f");

    let mut table = Table::new("ratios", &["function", "min", "rms", "max", "discrete_min", "a_term", "b_term"]);
    for (i, s) in samples.iter().enumerate() {
        table.push(vec![i as f64, s.min, s.rms, s.max, s.discrete_min, s.a_term, s.b_term]);
    }
    rep.table(table);
    let mut per_xi = Table::new("per_shift", &["function", "xi", "ratio"]);
    let step = 2f64.powi(-(cfg.xi_resolution as i32));
    for (i, s) in samples.iter().enumerate() {
        for (k, r) in s.ratios.iter().enumerate() {
            per_xi.push(vec![i as f64, k as f64 * step, *r]);
        }
    }
    rep.table(per_xi);
    Ok(rep.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_function() {
        let cfg = MainLemmaConfig {
            levels: 3,
            xi_resolution: 2,
            grid_level: 6,
            ..Default::default()
        };
        let basis = FranklinBasis::with_max(Variant::Reconstructed, 8).unwrap();
        let s = main_lemma_sample(&basis, &[0.0; 8], &[(false, vec![1.0; 8])], &cfg).unwrap();
        assert_eq!(s.max, 0.0);
    }

    #[test]
    fn order_statistics() {
        let cfg = MainLemmaConfig {
            functions: 3,
            levels: 4,
            xi_resolution: 2,
            sign_patterns: 2,
            continuous_patterns: 1,
            grid_level: 8,
            ..Default::default()
        };
        let r = verify_main_lemma(&cfg, 5).unwrap();
        assert!(r.checks.iter().any(|c| c.name == "xi_average_bound" && c.passed));
        let u2 = r.get("u2_min_ratio").unwrap();
        assert!(u2 > 0.5 && u2 < 2.0, "{u2}");
    }
}

//! The good-λ inequality
//! `|{M^d f > λ, S f < ελ}| ≲ exp(-c/ε²) |{M^d f > λ/2}|` on random Haar polynomials.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{item_rng, linear_fit, unit_normal, ExperimentReport, LinearFit, Table};
use crate::error::{Error, Result};
use crate::haar::square_function;
use crate::maximal::dyadic_maximal;
use crate::mesh::Dyadic;
use crate::pwl::{StepFunction, TorusFunction};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CwwConfig {
    pub functions: usize,
    /// Haar polynomials use `h_2, …, h_{2^resolution}`.
    pub resolution: u32,
    pub shift: Dyadic,
    /// Thresholds `λ` as quantiles of the values of `M^d f`.
    pub quantiles: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub min_r2: f64,
}

impl Default for CwwConfig {
    fn default() -> Self {
        CwwConfig {
            functions: 200,
            resolution: 8,
            shift: Dyadic::ZERO,
            quantiles: vec![0.5, 0.7, 0.9],
            epsilons: (0..9).map(|i| (10 + 5 * i) as f64 / 100.0).collect(),
            min_r2: 0.8,
        }
    }
}

/// Values on the `2^resolution` dyadic cells of `Σ_{n=2}^{2^resolution} a_{n-2} h_n`.
pub fn haar_polynomial(resolution: u32, coeffs: &[f64]) -> Result<StepFunction> {
    let cells = 1usize << resolution;
    if coeffs.len() != cells - 1 {
        return Err(Error::Domain(format!("{} coefficients for {} cells", coeffs.len(), cells)));
    }
    let mut vals = vec![0.0; cells];
    for (idx, &a) in coeffs.iter().enumerate() {
        // h_n with n - 1 = 2^k + i
        let m = idx + 1;
        let k = usize::BITS - 1 - m.leading_zeros();
        let i = m - (1 << k);
        let width = cells >> k;
        let amp = a * 2f64.powf(k as f64 / 2.0);
        for c in 0..width {
            vals[i * width + c] += if c < width / 2 { amp } else { -amp };
        }
    }
    Ok(StepFunction::from_shifted_grid(resolution, Dyadic::ZERO, &vals))
}

/// `(μ₁, μ₂)` for each `(λ, ε)`: `|{M^d f > λ, S f < ελ}|` and `|{M^d f > λ/2}|`.
pub fn good_lambda_measures(f: &StepFunction, shift: Dyadic, lambdas: &[f64], epsilons: &[f64]) -> Result<Vec<Vec<(f64, f64)>>> {
    let md = dyadic_maximal(f, shift).lower;
    let s = square_function(f, shift)?;
    // both are step functions; pair them on a common grid of pieces
    let pieces = crate::pwl::union_knots([md.knots(), s.knots()]);
    let mut cells = Vec::with_capacity(pieces.len());
    for (i, &a) in pieces.iter().enumerate() {
        let b = pieces.get(i + 1).map(|d| d.to_f64()).unwrap_or(1.0);
        cells.push((b - a.to_f64(), md.evaluate(a), s.evaluate(a)));
    }
    Ok(lambdas
        .iter()
        .map(|&lam| {
            epsilons
                .iter()
                .map(|&eps| {
                    let mu1 = cells.iter().filter(|c| c.1 > lam && c.2 < eps * lam).map(|c| c.0).sum();
                    let mu2 = cells.iter().filter(|c| c.1 > lam / 2.0).map(|c| c.0).sum();
                    (mu1, mu2)
                })
                .collect()
        })
        .collect())
}

fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (q * (v.len() - 1) as f64).round() as usize;
    v[pos.min(v.len() - 1)]
}

pub fn verify_cww(cfg: &CwwConfig, seed: u64) -> Result<ExperimentReport> {
    if cfg.functions == 0 || cfg.resolution == 0 || cfg.resolution > 16 {
        return Err(Error::Config("need functions > 0 and resolution in 1..=16".into()));
    }
    if cfg.epsilons.iter().any(|e| !(*e > 0.0 && *e < 1.0)) || cfg.quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return Err(Error::Config("ε must lie in (0, 1) and quantiles in [0, 1]".into()));
    }
    let mut rep = ExperimentReport::new("cww", "cww", seed);
    rep.config("functions", cfg.functions)
        .config("resolution", cfg.resolution)
        .config("shift", cfg.shift)
        .config("quantiles", &cfg.quantiles)
        .config("epsilons", &cfg.epsilons)
        .config("coefficients", "h_2..h_2^K standard normal, normalized");
    let cells = 1usize << cfg.resolution;
    let per_f: Vec<Vec<Vec<(f64, f64)>>> = (0..cfg.functions)
        .into_par_iter()
        .map(|i| {
            let mut rng = item_rng(seed, &[i as u64]);
            let f = haar_polynomial(cfg.resolution, &unit_normal(&mut rng, cells - 1))?;
            let md = dyadic_maximal(&f, cfg.shift).lower;
            let lambdas: Vec<f64> = cfg.quantiles.iter().map(|&q| quantile(md.values(), q)).collect();
            good_lambda_measures(&f, cfg.shift, &lambdas, &cfg.epsilons)
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new("measures", &["epsilon", "inv_eps2", "mu1", "mu2", "log_ratio"]);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut skipped = 0;
    for (e, &eps) in cfg.epsilons.iter().enumerate() {
        let mut mu1 = 0.0;
        let mut mu2 = 0.0;
        for f in &per_f {
            for lam in f {
                mu1 += lam[e].0;
                mu2 += lam[e].1;
            }
        }
        let lr = if mu1 > 0.0 && mu2 > 0.0 { (mu1 / mu2).ln() } else { f64::NEG_INFINITY };
        table.push(vec![eps, 1.0 / (eps * eps), mu1, mu2, lr]);
        if lr.is_finite() {
            xs.push(1.0 / (eps * eps));
            ys.push(lr);
        } else {
            skipped += 1;
        }
    }
    rep.constant("skipped_epsilons", skipped as f64);
    match linear_fit(&xs, &ys) {
        Some(LinearFit { slope, intercept, r2 }) => {
            let c = -slope;
            rep.constant("c", c).constant("intercept", intercept).constant("r2", r2);
            rep.check("positive_decay", c > 0.0, format!("c = {c:.4}"));
            rep.check("linear_fit", r2 >= cfg.min_r2, format!("R² = {r2:.4} (limit {})", cfg.min_r2));
        }
        None => {
            rep.check("positive_decay", false, format!("only {} usable ε values", xs.len()));
        }
    }
    rep.table(table);
    Ok(rep.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::haar::haar_function;
    use crate::pwl::inner_product;

    #[test]
    fn polynomial_matches_haar_functions() {
        let coeffs: Vec<f64> = (0..15).map(|i| (i as f64 * 0.7).sin()).collect();
        let f = haar_polynomial(4, &coeffs).unwrap();
        for n in 2..=16 {
            let h = haar_function(n).unwrap();
            assert!((inner_product(&f, &h) - coeffs[n - 2]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_atom_has_empty_good_set() {
        let mut c = vec![0.0; 7];
        c[0] = 1.0;
        let f = haar_polynomial(3, &c).unwrap();
        let m = good_lambda_measures(&f, Dyadic::ZERO, &[0.5, 0.9], &[0.3, 0.9]).unwrap();
        for row in &m {
            for &(mu1, mu2) in row {
                assert_eq!(mu1, 0.0);
                assert_eq!(mu2, 1.0);
            }
        }
    }

    #[test]
    fn constant_function_is_skipped() {
        let f = StepFunction::constant(0.0);
        let m = good_lambda_measures(&f, Dyadic::ZERO, &[0.0], &[0.5]).unwrap();
        assert_eq!(m[0][0], (0.0, 0.0));
    }
}

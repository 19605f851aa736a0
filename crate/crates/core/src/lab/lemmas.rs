//! Randomized checks of the auxiliary inequalities: the majorant `λ_{J,n}`,
//! the monotone-majorant lemma, `ΔH` against `M`, the kernel integral bound
//! and `H(ΔU f)` against `M_n f`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{item_rng, normal_vec, random_mesh_function, spread, ExperimentReport, Table};
use crate::error::{Error, Result};
use crate::franklin::{fit_decay, FranklinBasis, UExpansion, Variant};
use crate::haar::HaarExpansion;
use crate::maximal::{MaximalEvaluator, MARGIN};
use crate::mesh::{len_ticks, Dyadic, FRAC_BITS, ONE};
use crate::pwl::{inner_product, linear_combination, PiecewiseLinear, StepFunction, TorusFunction};

/// Largest accepted `max / min` of a lemma constant across its sweep.
pub const SPREAD_LIMIT: f64 = 3.0;

/// Settings shared by the lemma verifiers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LemmaConfig {
    /// Random trials per swept parameter cell.
    pub trials: usize,
    /// Shifts `ξ` run over the grid `j / 2^xi_resolution`.
    pub xi_resolution: u32,
    /// Evaluation grid `i / 2^grid_level` where a pointwise sup is taken.
    pub grid_level: u32,
    /// Multiplies every random function; constants must not depend on it.
    pub scale: f64,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        LemmaConfig {
            trials: 40,
            xi_resolution: 4,
            grid_level: 12,
            scale: 1.0,
        }
    }
}

impl LemmaConfig {
    fn validate(&self) -> Result<()> {
        if self.trials == 0 || !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config("lemma runs need trials > 0 and a positive scale".into()));
        }
        if self.xi_resolution > 16 || self.grid_level > 20 {
            return Err(Error::Config("xi_resolution ≤ 16 and grid_level ≤ 20".into()));
        }
        Ok(())
    }

    fn record(&self, rep: &mut ExperimentReport) {
        rep.config("trials_per_cell", self.trials)
            .config("xi_resolution", self.xi_resolution)
            .config("grid_level", self.grid_level)
            .config("scale", self.scale);
    }
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, f64::max)
}

/// Cell index of `x` in the level-`level` grid shifted by `xi`.
fn cell_of(x: u64, xi: Dyadic, level: u32) -> usize {
    ((x.wrapping_sub(xi.ticks()) & (ONE - 1)) >> (FRAC_BITS - level)) as usize
}

fn spread_check(rep: &mut ExperimentReport, name: &str, constants: &[f64]) -> f64 {
    let s = spread(constants);
    rep.constant(&format!("{name}_spread"), s);
    rep.check(
        &format!("{name}_stable"),
        s.is_finite() && s <= SPREAD_LIMIT,
        format!("max/min {s:.3} (limit {SPREAD_LIMIT})"),
    );
    s
}

// ---------------------------------------------------------------------------
// majorant λ_{J,n}

/// The majorant `λ_{J,n}`: `1` on `2J`, `c |J| N ρ^{N d(x, c_J)}` outside,
/// with `N = 2^n`, the scale of the coarser half `U_{n-1}` of `ΔU_n`. An interval through `0` or `1/2` is split there and
/// each half uses its own part; between `c_J` and the centre of a half the
/// value is `1`, which keeps it monotone on both sides of `c_J`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Majorant {
    pub start: f64,
    pub len: f64,
    pub level: u32,
    pub rho: f64,
    pub c: f64,
    parts: Vec<(f64, f64)>,
}

impl Majorant {
    /// `rho` is the decay per unit of `N d`; `c = e ln(1/ρ)` bounds the
    /// outer part by `1`.
    pub fn new(start: f64, len: f64, level: u32, rho: f64) -> Result<Self> {
        if !(len > 0.0 && len <= 1.0) || !(0.0..1.0).contains(&start) {
            return Err(Error::Domain(format!("[{start}, {start}+{len}) is not an arc of the torus")));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Domain("decay must lie in (0, 1)".into()));
        }
        let end = start + len;
        let cut = [0.5, 1.0, 1.5]
            .into_iter()
            .find(|&p| start < p && p < end && len < 1.0);
        let parts = match cut {
            Some(p) => vec![(start, p - start), (p, end - p)],
            None => vec![(start, len)],
        };
        Ok(Majorant {
            start,
            len,
            level,
            rho,
            c: std::f64::consts::E * (1.0 / rho).ln(),
            parts,
        })
    }

    pub fn center(&self) -> f64 {
        (self.start + self.len / 2.0).rem_euclid(1.0)
    }

    fn plain(&self, x: f64, start: f64, len: f64) -> f64 {
        let c = start + len / 2.0;
        let d = torus_dist(x, c);
        if d < len {
            return 1.0;
        }
        let n = 2f64.powi(self.level as i32);
        (self.c * len * n * self.rho.powf(n * d)).min(1.0)
    }

    pub fn at(&self, x: f64) -> f64 {
        if self.parts.len() == 1 {
            return self.plain(x, self.start, self.len);
        }
        let cj = self.start + self.len / 2.0;
        // signed offset from c_J in [-1/2, 1/2)
        let off = (x - cj + 0.5).rem_euclid(1.0) - 0.5;
        let (s, l) = if off >= 0.0 { self.parts[1] } else { self.parts[0] };
        let part_off = s + l / 2.0 - cj;
        if (off >= 0.0 && off <= part_off) || (off < 0.0 && off >= part_off) {
            1.0
        } else {
            self.plain(x, s, l)
        }
    }
}

fn torus_dist(x: f64, y: f64) -> f64 {
    let d = (x - y).rem_euclid(1.0);
    d.min(1.0 - d)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MajorantSweep {
    pub levels: Vec<u32>,
    /// `|J| = 2^-j` for each `j`.
    pub interval_levels: Vec<u32>,
    /// Absolute floor below which `|ΔU_n g|` is treated as rounding noise.
    pub noise_floor: f64,
}

impl Default for MajorantSweep {
    fn default() -> Self {
        MajorantSweep {
            levels: (2..=8).collect(),
            interval_levels: (2..=6).collect(),
            noise_floor: 1e-12,
        }
    }
}

/// A random `g` with `‖g‖_∞ ≤ 1` supported on `[a, a + s 2^-level)`.
fn random_on_arc<R: Rng>(rng: &mut R, level: u32, first: usize, cells: usize, constant: bool) -> StepFunction {
    let m = 1usize << level;
    let mut vals = vec![0.0; m];
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    for k in 0..cells {
        vals[(first + k) % m] = if constant {
            sign
        } else {
            rng.random_range(-1.0..=1.0)
        };
    }
    StepFunction::from_shifted_grid(level, Dyadic::ZERO, &vals).simplify()
}

/// `sign(row)` on the arc of `cells` level-`level` cells from `first`,
/// sampled at the midpoints of the level-`fine` cells.
fn kernel_sign_on_arc(row: &PiecewiseLinear, level: u32, first: usize, cells: usize, fine: u32) -> StepFunction {
    let m = 1usize << fine;
    let per = 1usize << (fine - level);
    let start = first * per;
    let mut vals = vec![0.0; m];
    let h = 1.0 / m as f64;
    for k in 0..cells * per {
        let i = (start + k) % m;
        let v = row.evaluate_f64((i as f64 + 0.5) * h);
        vals[i] = if v >= 0.0 { 1.0 } else { -1.0 };
    }
    StepFunction::from_shifted_grid(fine, Dyadic::ZERO, &vals).simplify()
}

pub fn verify_majorant_lemma(cfg: &LemmaConfig, sweep: &MajorantSweep, seed: u64) -> Result<ExperimentReport> {
    cfg.validate()?;
    if sweep.levels.is_empty() || sweep.interval_levels.is_empty() {
        return Err(Error::Config("empty sweep".into()));
    }
    if sweep.levels.iter().any(|&n| n == 0 || n > 10) || sweep.interval_levels.iter().any(|&j| j > 12) {
        return Err(Error::Config("levels must lie in 1..=10, interval levels in 0..=12".into()));
    }
    let top = *sweep.levels.iter().max().unwrap();
    let basis = FranklinBasis::with_max(Variant::Reconstructed, 1 << top)?;
    let classical = FranklinBasis::with_max(Variant::Classical, 64)?;
    let q = fit_decay(&classical, 64, Some((6, Dyadic::HALF)))?;
    let q = match q {
        crate::franklin::DecayFit::Fitted { kernel: Some(k), .. } => k.q,
        _ => return Err(Error::Construction("kernel decay fit failed".into())),
    };
    let rho = q.sqrt();
    let mut rep = ExperimentReport::new("majorant", "x21", seed);
    cfg.record(&mut rep);
    rep.config("levels", &sweep.levels)
        .config("interval_levels", &sweep.interval_levels)
        .config("noise_floor", sweep.noise_floor)
        .config("majorant", "1 on 2J, c|J|N rho^(N d(x,c_J)) outside, N = 2^n, c = e ln(1/rho)");
    rep.constant("kernel_q", q).constant("rho", rho);

    let grid = 1usize << cfg.grid_level;
    let xs: Vec<f64> = (0..grid).map(|i| i as f64 / grid as f64).collect();
    let cells: Vec<(u32, u32)> = sweep
        .levels
        .iter()
        .flat_map(|&n| sweep.interval_levels.iter().map(move |&j| (n, j)))
        .collect();
    struct Trial {
        ratio: f64,
        l1_over_len: f64,
        monotone: bool,
        on_j: bool,
    }
    let results: Vec<Vec<Trial>> = cells
        .par_iter()
        .map(|&(n, jl)| {
            (0..cfg.trials)
                .map(|t| -> Result<Trial> {
                    let mut rng = item_rng(seed, &[n as u64, jl as u64, t as u64]);
                    let sub = jl + 3;
                    let first = rng.random_range(0..1usize << sub);
                    let len = 2f64.powi(-(jl as i32));
                    let start = first as f64 / (1u64 << sub) as f64;
                    let g = match t % 3 {
                        2 => {
                            // the g attaining sup |ΔU_n g(x0)|: the sign of the kernel row on J
                            let off = rng.random_range(-2.0..2.0) * len.max(1.0 / (1u64 << n) as f64);
                            let x0 = Dyadic::snap((start + len / 2.0 + off).rem_euclid(1.0));
                            let row = linear_combination(
                                &UExpansion::block(n)
                                    .map(|j| {
                                        let u = basis.function(j);
                                        (u.evaluate(x0), u)
                                    })
                                    .collect::<Vec<_>>(),
                            );
                            kernel_sign_on_arc(&row, sub, first, 8, (n + 6).max(sub))
                        }
                        k => random_on_arc(&mut rng, sub, first, 8, k == 0),
                    }
                    .scale(cfg.scale);
                    let lam = Majorant::new(start, len, n, rho)?;
                    let du = UExpansion::new(&basis, &g, n)?.increment(n);
                    let lv: Vec<f64> = xs.iter().map(|&x| lam.at(x)).collect();
                    let mut ratio = 0.0f64;
                    for (i, &x) in xs.iter().enumerate() {
                        let v = (du.evaluate_f64(x).abs() / cfg.scale - sweep.noise_floor).max(0.0);
                        let lhs = lv[i] + lv[(grid - i) % grid];
                        ratio = ratio.max(v / lhs);
                    }
                    let l1 = lv.iter().sum::<f64>() / grid as f64;
                    // monotone away from c_J along the grid, both directions
                    let c0 = (lam.center() * grid as f64).floor() as usize;
                    let mut monotone = true;
                    for dir in [1isize, -1] {
                        let mut prev = f64::INFINITY;
                        for s in 1..grid / 2 {
                            let i = (c0 as isize + dir * s as isize).rem_euclid(grid as isize) as usize;
                            monotone &= lv[i] <= prev + 1e-15;
                            prev = lv[i];
                        }
                    }
                    let on_j = (0..8 << (cfg.grid_level.saturating_sub(sub)))
                        .all(|k| lam.at((start + k as f64 / grid as f64).rem_euclid(1.0)) == 1.0);
                    Ok(Trial {
                        ratio,
                        l1_over_len: l1 / len,
                        monotone,
                        on_j,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut table = Table::new("constants", &["n", "interval_level", "C", "max_l1_over_len"]);
    let mut constants = Vec::new();
    let mut total = 0;
    for (&(n, jl), trials) in cells.iter().zip(&results) {
        let c = max_of(trials.iter().map(|t| t.ratio));
        let l1 = max_of(trials.iter().map(|t| t.l1_over_len));
        table.push(vec![n as f64, jl as f64, c, l1]);
        constants.push(c);
        total += trials.len();
    }
    let all = results.iter().flatten();
    let c = max_of(constants.iter().copied());
    let l1 = max_of(all.clone().map(|t| t.l1_over_len));
    rep.constant("C", c).constant("max_l1_over_len", l1).constant("trials", total as f64);
    rep.check("finite_constant", c.is_finite() && c > 0.0, format!("C = {c}"));
    rep.check("one_on_J", all.clone().all(|t| t.on_j), "λ = 1 on J at every grid point of J");
    rep.check("unimodal", all.clone().all(|t| t.monotone), "λ monotone on both sides of c_J");
    rep.check("l1_bound", l1.is_finite(), format!("‖λ‖₁/|J| ≤ {l1:.3}"));
    spread_check(&mut rep, "C", &constants);
    rep.table(table);
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// monotone majorant

/// `|∫ f λ| ≤ ‖λ‖₁ M f(a)` for `λ` increasing on `[r, a)` and decreasing on `[a, 1 + r)`.
pub fn verify_monotone_majorant(trials: usize, scale: f64, seed: u64) -> Result<ExperimentReport> {
    if trials == 0 || !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Config("need trials > 0 and a positive scale".into()));
    }
    const LEVEL: u32 = 6;
    const TOL: f64 = 1e-12;
    let m = 1usize << LEVEL;
    let mut rep = ExperimentReport::new("monotone_majorant", "L7", seed);
    rep.config("trials", trials)
        .config("lambda_level", LEVEL)
        .config("scale", scale)
        .config("tolerance", TOL);
    let ratios: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<f64> {
            let mut rng = item_rng(seed, &[t as u64]);
            let peak = rng.random_range(0..m);
            let rise = rng.random_range(0..m);
            let mut lam = vec![0.0; m];
            match t % 10 {
                0 => {
                    // an indicator of an arc containing a
                    let left = rng.random_range(0..m);
                    let width = rng.random_range(left + 1..=m);
                    for k in 0..width {
                        lam[(peak + m - left + k) % m] = 1.0;
                    }
                }
                _ => {
                    let mut up: Vec<f64> = (0..rise).map(|_| rng.random::<f64>()).collect();
                    let mut down: Vec<f64> = (0..m - rise).map(|_| rng.random::<f64>()).collect();
                    up.sort_by(f64::total_cmp);
                    down.sort_by(|a, b| b.total_cmp(a));
                    for (k, v) in up.into_iter().chain(down).enumerate() {
                        lam[(peak + m - rise + k) % m] = v;
                    }
                }
            }
            let lam = StepFunction::from_shifted_grid(LEVEL, Dyadic::ZERO, &lam);
            let a = Dyadic::grid(peak as u64, LEVEL);
            let l1: f64 = lam.values().iter().zip(lam.piece_lengths()).map(|(v, l)| v.abs() * l).sum();
            let (lhs, mf) = match t % 10 {
                1 => {
                    let f = StepFunction::constant(scale);
                    (inner_product(&f, &lam).abs(), MaximalEvaluator::new(&f).at(a))
                }
                k if k % 2 == 0 => {
                    let level = rng.random_range(1..=7);
                    let f = random_mesh_function(&mut rng, level)?.scale(scale);
                    (inner_product(&f, &lam).abs(), MaximalEvaluator::new(&f).at(a))
                }
                _ => {
                    let level = rng.random_range(1..=7);
                    let v = normal_vec(&mut rng, 1 << level);
                    let shift = Dyadic::grid(rng.random_range(0..256), 8);
                    let f = StepFunction::from_shifted_grid(level, shift, &v).scale(scale);
                    (inner_product(&f, &lam).abs(), MaximalEvaluator::new(&f).at(a))
                }
            };
            Ok(lhs / (l1 * mf))
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = max_of(ratios.iter().copied());
    let failures = ratios.iter().filter(|&&r| !(r <= 1.0 + TOL)).count();
    rep.constant("max_ratio", worst)
        .constant("min_margin", 1.0 - worst)
        .constant("counterexamples", failures as f64);
    rep.check(
        "no_counterexample",
        failures == 0,
        format!("{failures} of {trials} trials exceed 1 + {TOL}"),
    );
    let mut table = Table::new("ratios", &["trial", "ratio"]);
    for (i, r) in ratios.iter().enumerate() {
        table.push(vec![i as f64, *r]);
    }
    rep.table(table);
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// ΔH against M

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IncrementSweep {
    pub m_values: Vec<u32>,
    /// Values of `n - m`.
    pub gaps: Vec<u32>,
}

impl Default for IncrementSweep {
    fn default() -> Self {
        IncrementSweep {
            m_values: vec![1, 2, 3],
            gaps: (0..=6).collect(),
        }
    }
}

/// `2^{n-m} |ΔH_{n,ξ}(g)(x)| / M g(x)` for `g ∈ Λ_m`, both pairings
/// `H_{n+1} - H_n` and `H_n - H_{n-1}`.
pub fn verify_increment_vs_maximal(cfg: &LemmaConfig, sweep: &IncrementSweep, seed: u64) -> Result<ExperimentReport> {
    cfg.validate()?;
    if sweep.m_values.is_empty() || sweep.gaps.is_empty() || sweep.m_values.contains(&0) {
        return Err(Error::Config("need m ≥ 1 and a nonempty gap list".into()));
    }
    let max_gap = *sweep.gaps.iter().max().unwrap();
    let mut rep = ExperimentReport::new("increment_vs_maximal", "x1", seed);
    cfg.record(&mut rep);
    rep.config("m_values", &sweep.m_values).config("gaps", &sweep.gaps);
    let xi_count = 1u64 << cfg.xi_resolution;
    let mut table = Table::new("constants", &["m", "gap", "C_next", "C_prev"]);
    let mut spreads = Vec::new();
    let mut total = 0;
    let mut overall = 0.0f64;
    for &m in &sweep.m_values {
        let top = m + max_gap + 1;
        let x_level = (top + 1).max(cfg.xi_resolution).min(cfg.grid_level.max(top));
        let xs: Vec<Dyadic> = (0..1u64 << x_level).map(|i| Dyadic::grid(i, x_level)).collect();
        // per trial: for each gap, (next pairing, previous pairing)
        let per_trial: Vec<Vec<(f64, f64)>> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| -> Result<Vec<(f64, f64)>> {
                let mut rng = item_rng(seed, &[m as u64, t as u64]);
                let g = if t == 0 {
                    let mut v = vec![0.0; 1 << m];
                    v[0] = 1.0;
                    crate::franklin::mesh_function(m, v)?
                } else {
                    random_mesh_function(&mut rng, m)?
                }
                .scale(cfg.scale);
                let ev = MaximalEvaluator::new(&g);
                let mg: Vec<f64> = xs.iter().map(|&x| ev.at(x) * (1.0 - MARGIN)).collect();
                let mut out = vec![(0.0f64, 0.0f64); sweep.gaps.len()];
                for k in 0..xi_count {
                    let xi = Dyadic::grid(k, cfg.xi_resolution);
                    let h = HaarExpansion::new(&g, xi, Some(top))?;
                    for (gi, &gap) in sweep.gaps.iter().enumerate() {
                        let n = m + gap;
                        let next = h.increment_values(n + 1);
                        let prev = h.increment_values(n);
                        let w = 2f64.powi(gap as i32);
                        for (x, &mx) in xs.iter().zip(&mg) {
                            let a = next[cell_of(x.ticks(), xi, n + 1)].abs() * w / mx;
                            let b = prev[cell_of(x.ticks(), xi, n)].abs() * w / mx;
                            out[gi].0 = out[gi].0.max(a);
                            out[gi].1 = out[gi].1.max(b);
                        }
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        total += per_trial.len();
        let mut c_next = Vec::new();
        for (gi, &gap) in sweep.gaps.iter().enumerate() {
            let a = max_of(per_trial.iter().map(|r| r[gi].0));
            let b = max_of(per_trial.iter().map(|r| r[gi].1));
            table.push(vec![m as f64, gap as f64, a, b]);
            rep.constant(&format!("C_m{m}_gap{gap}"), a);
            rep.constant(&format!("C_prev_m{m}_gap{gap}"), b);
            overall = overall.max(a);
            c_next.push(a);
        }
        spreads.push(spread_check(&mut rep, &format!("C_m{m}"), &c_next));
    }
    rep.constant("C", overall).constant("trials", total as f64);
    rep.check("finite_constant", overall.is_finite(), format!("C = {overall}"));
    rep.table(table);
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// kernel integral

/// `|∫ f ΔU_m(χ_I)| / (2^-m (M f(p) + M f(-p) + M f(q) + M f(-q)))` for `I = [p, q)`.
pub fn verify_kernel_integral(cfg: &LemmaConfig, m_values: &[u32], seed: u64) -> Result<ExperimentReport> {
    cfg.validate()?;
    if m_values.is_empty() || m_values.iter().any(|&m| m == 0 || m > 10) {
        return Err(Error::Config("m must lie in 1..=10".into()));
    }
    let top = *m_values.iter().max().unwrap();
    let basis = FranklinBasis::with_max(Variant::Reconstructed, 1 << top)?;
    let mut rep = ExperimentReport::new("kernel_integral", "x22", seed);
    cfg.record(&mut rep);
    rep.config("m_values", m_values);
    let mut table = Table::new("constants", &["m", "C", "C_dyadic", "C_random"]);
    let mut constants = Vec::new();
    let mut total = 0;
    for &m in m_values {
        let block: Vec<&PiecewiseLinear> = UExpansion::block(m).map(|j| basis.function(j)).collect();
        let res: Vec<(bool, f64)> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| -> Result<(bool, f64)> {
                let mut rng = item_rng(seed, &[m as u64, t as u64]);
                let dyadic = t % 2 == 0;
                let (p, len) = if dyadic {
                    let l = m - 1;
                    (Dyadic::grid(rng.random_range(0..1u64 << l), l), len_ticks(l))
                } else {
                    let p = Dyadic::grid(rng.random_range(0..1024), 10);
                    (p, rng.random_range(1..1024u64) * len_ticks(10))
                };
                let q = p.add_ticks(len);
                let chi = StepFunction::indicator(p, len);
                let res = m + 2;
                let f: Box<dyn TorusFunction + Send> = if t % 3 == 0 {
                    Box::new(random_mesh_function(&mut rng, res)?.scale(cfg.scale))
                } else {
                    let v = normal_vec(&mut rng, 1 << res);
                    Box::new(StepFunction::from_shifted_grid(res, Dyadic::ZERO, &v).scale(cfg.scale))
                };
                let lhs: f64 = block
                    .iter()
                    .map(|u| inner_product(&chi, *u) * inner_product(f.as_ref(), *u))
                    .sum::<f64>()
                    .abs();
                let ev = MaximalEvaluator::new(f.as_ref());
                let four: f64 = [p, p.neg(), q, q.neg()].iter().map(|&x| ev.at(x)).sum();
                let rhs = 2f64.powi(-(m as i32)) * four * (1.0 - MARGIN);
                Ok((dyadic, lhs / rhs))
            })
            .collect::<Result<Vec<_>>>()?;
        total += res.len();
        let c = max_of(res.iter().map(|r| r.1));
        let cd = max_of(res.iter().filter(|r| r.0).map(|r| r.1));
        let cr = max_of(res.iter().filter(|r| !r.0).map(|r| r.1));
        table.push(vec![m as f64, c, cd, cr]);
        rep.constant(&format!("C_m{m}"), c);
        constants.push(c);
    }
    let c = max_of(constants.iter().copied());
    rep.constant("C", c).constant("trials", total as f64);
    rep.check("finite_constant", c.is_finite(), format!("C = {c}"));
    spread_check(&mut rep, "C", &constants);
    rep.table(table);
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// H(ΔU f) against M_n f

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HaarOfIncrementSweep {
    pub n_values: Vec<u32>,
    /// Values of `m - n`.
    pub gaps: Vec<u32>,
}

impl Default for HaarOfIncrementSweep {
    fn default() -> Self {
        HaarOfIncrementSweep {
            n_values: vec![1, 2, 3],
            gaps: (1..=5).collect(),
        }
    }
}

/// `|H_{n,ξ}(ΔU_m f)(x)| / (2^{n-m} M_n f(x, ξ))` over the `ξ` grid and all cells.
pub fn verify_haar_of_delta_u(cfg: &LemmaConfig, sweep: &HaarOfIncrementSweep, seed: u64) -> Result<ExperimentReport> {
    cfg.validate()?;
    if sweep.n_values.is_empty() || sweep.gaps.is_empty() || sweep.n_values.contains(&0) || sweep.gaps.contains(&0) {
        return Err(Error::Config("need n ≥ 1 and m - n ≥ 1".into()));
    }
    let top = sweep.n_values.iter().max().unwrap() + sweep.gaps.iter().max().unwrap();
    if top > 10 {
        return Err(Error::Config("m must not exceed 10".into()));
    }
    let basis = FranklinBasis::with_max(Variant::Reconstructed, 1 << top)?;
    let mut rep = ExperimentReport::new("haar_of_increment", "x2", seed);
    cfg.record(&mut rep);
    rep.config("n_values", &sweep.n_values).config("gaps", &sweep.gaps);
    let kx = cfg.xi_resolution.max(*sweep.n_values.iter().max().unwrap());
    let mut table = Table::new("constants", &["n", "gap", "C"]);
    let mut overall = 0.0f64;
    let mut total = 0;
    for &n in &sweep.n_values {
        let mut constants = Vec::new();
        for &gap in &sweep.gaps {
            let m = n + gap;
            let res: Vec<f64> = (0..cfg.trials)
                .into_par_iter()
                .map(|t| -> Result<f64> {
                    let mut rng = item_rng(seed, &[n as u64, gap as u64, t as u64]);
                    let size = 1usize << m;
                    let mut b = vec![0.0; size];
                    if t % 2 == 0 {
                        for j in UExpansion::block(m) {
                            b[j - 1] = rng.sample::<f64, _>(rand_distr::StandardNormal);
                        }
                    } else {
                        b = normal_vec(&mut rng, size);
                    }
                    b.iter_mut().for_each(|x| *x *= cfg.scale);
                    let terms: Vec<(f64, &PiecewiseLinear)> =
                        b.iter().enumerate().map(|(i, &c)| (c, basis.function(i + 1))).collect();
                    let f = linear_combination(&terms);
                    let du = UExpansion::from_coefficients(&basis, b)?.increment(m);
                    let ev = MaximalEvaluator::new(&f);
                    let grid = 1u64 << kx;
                    let mf: Vec<f64> = (0..grid).map(|i| ev.at(Dyadic::grid(i, kx))).collect();
                    let at = |d: Dyadic| mf[(d.ticks() >> (FRAC_BITS - kx)) as usize];
                    let w = 2f64.powi(-(gap as i32));
                    let mut worst = 0.0f64;
                    for k in 0..1u64 << cfg.xi_resolution {
                        let xi = Dyadic::grid(k, cfg.xi_resolution);
                        let h = HaarExpansion::new(&du, xi, Some(n))?;
                        for (i, avg) in h.averages(n).iter().enumerate() {
                            let a = xi.add(Dyadic::grid(i as u64, n));
                            let bnd = a.add(Dyadic::grid(1, n));
                            let four = at(a) + at(a.neg()) + at(bnd) + at(bnd.neg());
                            worst = worst.max(avg.abs() / (w * four * (1.0 - MARGIN)));
                        }
                    }
                    Ok(worst)
                })
                .collect::<Result<Vec<_>>>()?;
            total += res.len();
            let c = max_of(res);
            table.push(vec![n as f64, gap as f64, c]);
            rep.constant(&format!("C_n{n}_gap{gap}"), c);
            overall = overall.max(c);
            constants.push(c);
        }
        spread_check(&mut rep, &format!("C_n{n}"), &constants);
    }
    rep.constant("C", overall).constant("trials", total as f64);
    rep.check("finite_constant", overall.is_finite(), format!("C = {overall}"));
    rep.table(table);
    Ok(rep.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majorant_shape() {
        let lam = Majorant::new(0.1, 0.125, 4, 0.5).unwrap();
        assert_eq!(lam.at(0.15), 1.0);
        assert_eq!(lam.at(0.05), 1.0);
        assert!(lam.at(0.5) < lam.at(0.3));
        assert!(lam.at(0.3) <= 1.0);
        // through 0: split at the origin
        let lam = Majorant::new(0.9, 0.2, 3, 0.5).unwrap();
        assert_eq!(lam.at(0.0), 1.0);
        assert_eq!(lam.at(0.95), 1.0);
        assert_eq!(lam.at(0.05), 1.0);
        assert!(lam.at(0.5) < 1.0);
        assert!(Majorant::new(0.1, 0.0, 3, 0.5).is_err());
    }

    #[test]
    fn zero_function_gives_zero_constant() {
        let basis = FranklinBasis::with_max(Variant::Reconstructed, 16).unwrap();
        let g = StepFunction::constant(0.0);
        let du = UExpansion::new(&basis, &g, 4).unwrap().increment(4);
        assert_eq!(du.sup_norm(), 0.0);
    }

    #[test]
    fn monotone_majorant_small_run() {
        let r = verify_monotone_majorant(60, 1.0, 3).unwrap();
        assert!(r.passed(), "{:?}", r.checks);
        assert!(r.get("max_ratio").unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn cell_lookup() {
        let xi = Dyadic::grid(1, 3);
        assert_eq!(cell_of(Dyadic::grid(1, 3).ticks(), xi, 2), 0);
        assert_eq!(cell_of(Dyadic::ZERO.ticks(), xi, 2), 3);
    }
}

//! Growth of `A_n`: the best ratio `‖max_k |g_k|‖_p / ‖g‖_p` over families
//! of `n` functions dominated by `g`.
//!
//! Functions are sampled at the midpoints of a dyadic grid. For the Haar
//! system these samples are exact; for the Franklin system the `L^p` norms
//! become midpoint sums. The lower half is a greedy search over nested
//! families, the upper half samples random families; the two are reported
//! separately.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{item_rng, linear_fit, unit_normal, ExperimentReport, Table};
use crate::error::{Error, Result};
use crate::franklin::{FranklinBasis, Variant};
use crate::haar::{haar_function, HaarExpansion};
use crate::mesh::Dyadic;
use crate::pwl::{combine_steps, linear_combination, max_abs_envelope, max_steps, PiecewiseLinear, StepFunction, TorusFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrowthSystem {
    Franklin,
    Haar,
}

impl fmt::Display for GrowthSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GrowthSystem::Franklin => "franklin",
            GrowthSystem::Haar => "haar",
        })
    }
}

impl FromStr for GrowthSystem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "franklin" => Ok(GrowthSystem::Franklin),
            "haar" => Ok(GrowthSystem::Haar),
            _ => Err(Error::Parse(format!("unknown basis `{s}` (franklin, haar)"))),
        }
    }
}

/// Which dominated families are admitted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Nested index sets growing by one index at a time.
    Sng,
    /// Nested index sets.
    Mon,
    /// Arbitrary multipliers `|λ| ≤ 1`.
    Full,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sng => "sng",
            Mode::Mon => "mon",
            Mode::Full => "full",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sng" => Ok(Mode::Sng),
            "mon" => Ok(Mode::Mon),
            "full" => Ok(Mode::Full),
            _ => Err(Error::Parse(format!("unknown mode `{s}` (sng, mon, full)"))),
        }
    }
}

// ---------------------------------------------------------------------------
// sampled system

#[derive(Clone, Debug)]
struct Sparse {
    lo: usize,
    vals: Vec<f64>,
}

/// Basis functions `φ_j`, `j = 2, …, 2^levels`, sampled at `(i + 1/2) / 2^grid_level`.
#[derive(Clone, Debug)]
pub struct SampledSystem {
    system: GrowthSystem,
    levels: u32,
    grid_level: u32,
    funcs: Vec<Sparse>,
    /// Location of the largest sample of each function.
    peaks: Vec<f64>,
}

/// Samples below this fraction of a function's sup are dropped.
const TRUNCATION: f64 = 1e-13;

/// Extra block levels available to nested (non-single-step) chains.
pub const MON_EXTRA_LEVELS: u32 = 2;

/// Extra block levels for the pointwise-sign families of full mode.
pub const FULL_EXTRA_LEVELS: u32 = 1;

impl SampledSystem {
    pub fn new(system: GrowthSystem, levels: u32, grid_level: u32) -> Result<Self> {
        if levels == 0 || levels > 14 || grid_level < levels + 1 || grid_level > 18 {
            return Err(Error::Config(format!(
                "sampled system needs 1 ≤ levels ≤ 14 and levels < grid_level ≤ 18, got {levels}, {grid_level}"
            )));
        }
        let g = 1usize << grid_level;
        let top = 1usize << levels;
        let xs: Vec<Dyadic> = (0..g as u64).map(|i| Dyadic::grid(2 * i + 1, grid_level + 1)).collect();
        let dense: Vec<Vec<f64>> = match system {
            GrowthSystem::Haar => (2..=top)
                .map(|j| {
                    let h = haar_function(j)?;
                    Ok(xs.iter().map(|&x| h.evaluate(x)).collect())
                })
                .collect::<Result<_>>()?,
            GrowthSystem::Franklin => {
                let basis = FranklinBasis::with_max(Variant::Classical, top)?;
                (2..=top)
                    .into_par_iter()
                    .map(|j| {
                        let f = basis.function(j);
                        xs.iter().map(|&x| f.evaluate(x)).collect()
                    })
                    .collect()
            }
        };
        let mut funcs = Vec::with_capacity(dense.len());
        let mut peaks = Vec::with_capacity(dense.len());
        for v in dense {
            let (imax, sup) = v
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) });
            let keep = |x: &f64| x.abs() > TRUNCATION * sup;
            let lo = v.iter().position(keep).unwrap_or(0);
            let hi = v.iter().rposition(keep).unwrap_or(0);
            peaks.push(match system {
                // the sign change of a Haar function, where its partial sums jump
                GrowthSystem::Haar => (lo + hi + 1) as f64 / (2 * g) as f64,
                GrowthSystem::Franklin => (imax as f64 + 0.5) / g as f64,
            });
            funcs.push(Sparse {
                lo,
                vals: v[lo..=hi].to_vec(),
            });
        }
        Ok(SampledSystem {
            system,
            levels,
            grid_level,
            funcs,
            peaks,
        })
    }

    pub fn grid_len(&self) -> usize {
        1 << self.grid_level
    }

    pub fn system(&self) -> GrowthSystem {
        self.system
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    fn pos(j: usize) -> usize {
        j - 2
    }

    /// Universe of the first `levels` dyadic blocks, `j = 2, …, 2^levels`.
    fn universe(levels: u32) -> std::ops::RangeInclusive<usize> {
        2..=1usize << levels
    }

    /// Block level of index `j`: `j ∈ (2^l, 2^{l+1}]`.
    fn level_of(j: usize) -> u32 {
        usize::BITS - 1 - (j - 1).leading_zeros()
    }

    fn add_to(&self, s: &mut [f64], j: usize, c: f64) {
        let f = &self.funcs[Self::pos(j)];
        for (x, v) in s[f.lo..f.lo + f.vals.len()].iter_mut().zip(&f.vals) {
            *x += c * v;
        }
    }

    fn support(&self, j: usize) -> std::ops::Range<usize> {
        let f = &self.funcs[Self::pos(j)];
        f.lo..f.lo + f.vals.len()
    }

    /// Samples of `Σ c_j φ_j`.
    pub fn combination(&self, coeffs: &[(usize, f64)]) -> Vec<f64> {
        let mut s = vec![0.0; self.grid_len()];
        for &(j, c) in coeffs {
            self.add_to(&mut s, j, c);
        }
        s
    }

    /// `‖g‖_p`, exact by orthonormality for `p = 2`, otherwise from the samples.
    pub fn norm(&self, coeffs: &[(usize, f64)], p: f64) -> f64 {
        if p == 2.0 {
            coeffs.iter().map(|c| c.1 * c.1).sum::<f64>().sqrt()
        } else {
            mean_pow(&self.combination(coeffs), p).powf(p.recip())
        }
    }
}

fn pow_abs(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x * x
    } else {
        x.abs().powf(p)
    }
}

fn mean_pow(v: &[f64], p: f64) -> f64 {
    v.iter().map(|&x| pow_abs(x, p)).sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------------------
// nested families

/// `g = Σ c_j φ_j` in chain order; the family is the partial sums over the
/// first `snapshots[k]` terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestedFamily {
    pub system: GrowthSystem,
    pub terms: Vec<(usize, f64)>,
    pub snapshots: Vec<usize>,
}

impl NestedFamily {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Whether consecutive index sets differ by exactly one index.
    pub fn is_single_step(&self) -> bool {
        self.snapshots.windows(2).all(|w| w[1] == w[0] + 1)
    }

    /// `G_k = {1, …, k}` on `φ_1 … φ_n` (the classical partial sums).
    pub fn partial_sums(system: GrowthSystem, coeffs: &[f64]) -> Self {
        NestedFamily {
            system,
            terms: coeffs.iter().enumerate().map(|(i, &c)| (i + 2, c)).collect(),
            snapshots: (1..=coeffs.len()).collect(),
        }
    }
}

/// `‖max_k |g_k|‖_p / ‖g‖_p` on the sample grid.
pub fn nested_ratio(sys: &SampledSystem, fam: &NestedFamily, p: f64) -> f64 {
    let g = sys.grid_len();
    let mut s = vec![0.0; g];
    let mut e = vec![0.0f64; g];
    let mut done = 0;
    for &k in &fam.snapshots {
        let (lo, hi) = fam.terms[done..k].iter().fold((g, 0), |(lo, hi), &(j, c)| {
            sys.add_to(&mut s, j, c);
            let r = sys.support(j);
            (lo.min(r.start), hi.max(r.end))
        });
        for i in lo..hi {
            e[i] = e[i].max(s[i].abs());
        }
        done = k;
    }
    let norm = sys.norm(&fam.terms, p);
    if norm == 0.0 {
        return 0.0;
    }
    mean_pow(&e, p).powf(p.recip()) / norm
}

/// The same ratio from exact piecewise functions (no sampling).
pub fn exact_nested_ratio(fam: &NestedFamily, p: f64) -> Result<f64> {
    match fam.system {
        GrowthSystem::Haar => {
            let hs: Vec<StepFunction> = fam.terms.iter().map(|&(j, _)| haar_function(j)).collect::<Result<_>>()?;
            let mut s = StepFunction::constant(0.0);
            let mut done = 0;
            let mut sums = Vec::new();
            for &k in &fam.snapshots {
                for i in done..k {
                    s = combine_steps(1.0, &s, fam.terms[i].1, &hs[i]).simplify();
                }
                sums.push(s.abs());
                done = k;
            }
            let env = max_steps(&sums.iter().collect::<Vec<_>>());
            let full = fam.terms.iter().zip(&hs).fold(StepFunction::constant(0.0), |acc, (t, h)| {
                combine_steps(1.0, &acc, t.1, h)
            });
            Ok(env.lp_norm(p)? / full.lp_norm(p)?)
        }
        GrowthSystem::Franklin => {
            let top = fam.terms.iter().map(|t| t.0).max().unwrap_or(2);
            let basis = FranklinBasis::with_max(Variant::Classical, top)?;
            let sums: Vec<PiecewiseLinear> = fam
                .snapshots
                .iter()
                .map(|&k| {
                    let terms: Vec<(f64, &PiecewiseLinear)> =
                        fam.terms[..k].iter().map(|&(j, c)| (c, basis.function(j))).collect();
                    linear_combination(&terms)
                })
                .collect();
            let env = max_abs_envelope(&sums.iter().map(|f| (1.0, f)).collect::<Vec<_>>());
            let norm = if p == 2.0 {
                fam.terms.iter().map(|t| t.1 * t.1).sum::<f64>().sqrt()
            } else {
                let terms: Vec<(f64, &PiecewiseLinear)> = fam.terms.iter().map(|&(j, c)| (c, basis.function(j))).collect();
                linear_combination(&terms).lp_norm(p)?
            };
            Ok(env.lp_norm(p)? / norm)
        }
    }
}

// ---------------------------------------------------------------------------
// greedy search

struct Greedy<'a> {
    sys: &'a SampledSystem,
    p: f64,
    s: Vec<f64>,
    e: Vec<f64>,
    pending: Vec<usize>,
}

impl<'a> Greedy<'a> {
    fn new(sys: &'a SampledSystem, p: f64) -> Self {
        let g = sys.grid_len();
        Greedy {
            sys,
            p,
            s: vec![0.0; g],
            e: vec![0.0; g],
            pending: Vec::new(),
        }
    }

    /// Increase of `Σ max(E, |S|)^p` if `c φ_j` were added and recorded.
    fn gain(&self, j: usize, c: f64) -> f64 {
        let f = &self.sys.funcs[SampledSystem::pos(j)];
        let mut g = 0.0;
        for (k, v) in f.vals.iter().enumerate() {
            let i = f.lo + k;
            let new = (self.s[i] + c * v).abs();
            if new > self.e[i] {
                g += pow_abs(new, self.p) - pow_abs(self.e[i], self.p);
            }
        }
        g
    }

    fn add(&mut self, j: usize, c: f64) {
        self.sys.add_to(&mut self.s, j, c);
        self.pending.push(j);
    }

    fn snapshot(&mut self) {
        for j in self.pending.drain(..) {
            for i in self.sys.support(j) {
                self.e[i] = self.e[i].max(self.s[i].abs());
            }
        }
    }
}

/// Greedy chain over `universe` with coefficient magnitudes `weight(j)`:
/// candidates are the next `window` indices of a sweep order, the pick and
/// its sign maximize the immediate gain; `per_step` indices are added
/// between recorded partial sums.
fn greedy_chain(
    sys: &SampledSystem,
    p: f64,
    universe: &[usize],
    weight: impl Fn(usize) -> f64,
    keys: &[f64],
    window: usize,
    per_step: usize,
    signs: &[f64],
) -> NestedFamily {
    let mut order: Vec<usize> = (0..universe.len()).collect();
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(universe[a].cmp(&universe[b])));
    let mut remaining: Vec<usize> = order.into_iter().map(|i| universe[i]).collect();
    let mut st = Greedy::new(sys, p);
    let mut terms = Vec::with_capacity(universe.len());
    let mut snapshots = Vec::new();
    while !remaining.is_empty() {
        for _ in 0..per_step {
            if remaining.is_empty() {
                break;
            }
            let w = window.min(remaining.len());
            let mut best: Option<(f64, usize, usize, f64)> = None; // gain, index, slot, coefficient
            for (slot, &j) in remaining[..w].iter().enumerate() {
                for &sign in signs {
                    let c = sign * weight(j);
                    let g = st.gain(j, c);
                    let better = match best {
                        None => true,
                        Some((bg, bj, _, _)) => {
                            let tol = 1e-12 * bg.abs().max(1e-300);
                            g > bg + tol || ((g - bg).abs() <= tol && j < bj)
                        }
                    };
                    if better {
                        best = Some((g, j, slot, c));
                    }
                }
            }
            let (_, j, slot, c) = best.expect("window is nonempty");
            remaining.remove(slot);
            st.add(j, c);
            terms.push((j, c));
        }
        st.snapshot();
        snapshots.push(terms.len());
    }
    NestedFamily {
        system: sys.system,
        terms,
        snapshots,
    }
}

// ---------------------------------------------------------------------------
// configuration and results

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Family sizes, powers of two ≥ 2.
    pub n_values: Vec<usize>,
    pub restarts: usize,
    /// Candidates examined per greedy step.
    pub window: usize,
    /// Sweep-order jitter in units of the block length, for restarts after the first.
    pub jitter: f64,
    /// Random families per `n` for the upper half.
    pub upper_samples: usize,
    /// Sample grid is `2^(levels + 1 + extra_grid_levels)` points.
    pub extra_grid_levels: u32,
    /// `c` in `ε_n = (c / ln n)^{1/2}`; `None` runs the good-λ fit first.
    pub epsilon_c: Option<f64>,
    /// The `A`/`B` split diagnostics run for `n` up to this size.
    pub diagnostics_max_n: usize,
    pub max_band_ratio: f64,
    pub max_upper_factor: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            n_values: (2..=10).map(|k| 1usize << k).collect(),
            restarts: 8,
            window: 8,
            jitter: 0.5,
            upper_samples: 16,
            extra_grid_levels: 2,
            epsilon_c: None,
            diagnostics_max_n: 64,
            max_band_ratio: 4.0,
            max_upper_factor: 3.0,
        }
    }
}

/// The split `‖p*‖² ≤ ∫[p*² − (P/ε)²]₊ + ‖P‖²/ε²` for a found family, `P = sup_k S(p_k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitDiagnostics {
    pub epsilon: f64,
    /// `‖P‖₂ / ‖g‖₂`.
    pub square_ratio: f64,
    /// `∫[p*² − (P/ε)²]₊ / ‖g‖²`.
    pub a_term: f64,
    /// `‖P‖² / (ε² ‖g‖²)`.
    pub b_term: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub n: usize,
    /// Best ratio found by the search, never below the previous row.
    pub lower: f64,
    /// Whether `lower` came from the smaller family carried over.
    pub carried: bool,
    pub lower_over_log: f64,
    pub upper_max: f64,
    pub upper_samples: usize,
    pub family_size: usize,
    pub split: Option<SplitDiagnostics>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthEstimate {
    pub system: GrowthSystem,
    pub mode: Mode,
    pub p: f64,
    pub seed: u64,
    pub config: SearchConfig,
    pub rows: Vec<GrowthRow>,
    /// Least-squares slope of `r_n²` against `log₂ n`.
    pub slope: f64,
    /// `max / min` of `r_n² / log₂ n`.
    pub band_ratio: f64,
    pub monotone: bool,
    /// Best nested family per `n` (full mode keeps its nested seed).
    #[serde(skip)]
    pub families: Vec<NestedFamily>,
}

fn log2(n: usize) -> f64 {
    (n as f64).log2()
}

/// Level-balanced weights: `|c_j| = (2^l L)^{-1/2}` on block `l`, so each of
/// the `L` blocks carries `1/L` of `‖g‖²`.
fn balanced_weight(levels: u32) -> impl Fn(usize) -> f64 {
    move |j| (2f64.powi(SampledSystem::level_of(j) as i32) * levels as f64).sqrt().recip()
}

/// Sweep offsets in units of the block's mesh step; restart `r` uses
/// direction `r % 2` and offset `r / 2`, later restarts add jitter.
const SWEEP_OFFSETS: [f64; 4] = [0.0, 0.5, 1.0, -0.5];

fn sweep_keys<R: Rng>(sys: &SampledSystem, universe: &[usize], restart: usize, jitter: f64, rng: &mut R) -> Vec<f64> {
    let dir = if restart % 2 == 0 { 1.0 } else { -1.0 };
    let offset = SWEEP_OFFSETS[(restart / 2) % SWEEP_OFFSETS.len()];
    let jittered = restart >= 2 * SWEEP_OFFSETS.len();
    universe
        .iter()
        .map(|&j| {
            let step = 2f64.powi(-(SampledSystem::level_of(j) as i32 + 1));
            let noise = if jittered { jitter * rng.random_range(-1.0..1.0) * step } else { 0.0 };
            dir * (sys.peaks[SampledSystem::pos(j)] + dir * offset * step + noise)
        })
        .collect()
}

fn lower_search(sys: &SampledSystem, mode: Mode, p: f64, n: usize, cfg: &SearchConfig, seed: u64) -> (f64, NestedFamily) {
    let levels = n.trailing_zeros();
    let mut variants: Vec<(u32, usize)> = vec![(levels, 1)];
    if mode != Mode::Sng {
        // longer chains recorded every `2^e` steps
        for e in 1..=MON_EXTRA_LEVELS {
            variants.push((levels + e, 1 << e));
        }
    }
    // greedy signs, then all-positive coefficients where only the order is searched
    let runs: Vec<(u32, usize, usize, bool)> = variants
        .iter()
        .flat_map(|&(l, step)| {
            let free = (0..cfg.restarts.max(1)).map(move |r| (l, step, r, false));
            let fixed = (0..cfg.restarts.min(2 * SWEEP_OFFSETS.len())).map(move |r| (l, step, r, true));
            free.chain(fixed)
        })
        .collect();
    let found: Vec<(f64, NestedFamily)> = runs
        .par_iter()
        .map(|&(l, step, r, fixed)| {
            let mut rng = item_rng(seed, &[n as u64, l as u64, r as u64]);
            let universe: Vec<usize> = SampledSystem::universe(l).collect();
            let keys = sweep_keys(sys, &universe, r, cfg.jitter, &mut rng);
            let fam = greedy_chain(sys, p, &universe, balanced_weight(l), &keys, cfg.window, step, if fixed { &[1.0] } else { &[1.0, -1.0] });
            (nested_ratio(sys, &fam, p), fam)
        })
        .collect();
    found
        .into_iter()
        .fold(None, |best: Option<(f64, NestedFamily)>, cur| match best {
            Some(b) if b.0 >= cur.0 => Some(b),
            _ => Some(cur),
        })
        .expect("at least one run")
}

/// `n` functions `g_k = Σ sign(c_j φ_j(x_k)) c_j φ_j`, each maximal at one grid point.
fn pointwise_sign_family(sys: &SampledSystem, coeffs: &[(usize, f64)], n: usize, p: f64) -> f64 {
    let g = sys.grid_len();
    let mut env = vec![0.0f64; g];
    for k in 0..n {
        let x = (k * g) / n + g / (2 * n);
        let signed: Vec<(usize, f64)> = coeffs
            .iter()
            .map(|&(j, c)| {
                let f = &sys.funcs[SampledSystem::pos(j)];
                let v = if (f.lo..f.lo + f.vals.len()).contains(&x) { f.vals[x - f.lo] } else { 0.0 };
                (j, if c * v < 0.0 { -c } else { c })
            })
            .collect();
        for (e, s) in env.iter_mut().zip(sys.combination(&signed)) {
            *e = e.max(s.abs());
        }
    }
    mean_pow(&env, p).powf(p.recip()) / sys.norm(coeffs, p)
}

/// Largest ratio over random `g` and random admissible families of size `n`.
fn upper_samples(sys: &SampledSystem, mode: Mode, p: f64, n: usize, samples: usize, seed: u64) -> f64 {
    (0..samples)
        .into_par_iter()
        .map(|t| {
            let mut rng = item_rng(seed, &[0x7570, n as u64, t as u64]);
            let levels = n.trailing_zeros() + u32::from(mode == Mode::Mon);
            let universe: Vec<usize> = SampledSystem::universe(levels).collect();
            let a = unit_normal(&mut rng, universe.len());
            let mut terms: Vec<(usize, f64)> = universe.iter().copied().zip(a).collect();
            match mode {
                Mode::Sng | Mode::Mon => {
                    terms.shuffle(&mut rng);
                    let snapshots = if mode == Mode::Sng {
                        (1..=terms.len()).collect()
                    } else {
                        let mut cuts: Vec<usize> = (1..terms.len()).collect();
                        cuts.shuffle(&mut rng);
                        cuts.truncate(n - 1);
                        cuts.push(terms.len());
                        cuts.sort_unstable();
                        cuts
                    };
                    let fam = NestedFamily {
                        system: sys.system,
                        terms,
                        snapshots,
                    };
                    nested_ratio(sys, &fam, p)
                }
                Mode::Full => {
                    let g = sys.grid_len();
                    let mut env = vec![0.0f64; g];
                    for _ in 0..n {
                        let lam: Vec<(usize, f64)> =
                            terms.iter().map(|&(j, c)| (j, c * rng.random_range(-1.0..=1.0))).collect();
                        for (e, s) in env.iter_mut().zip(sys.combination(&lam)) {
                            *e = e.max(s.abs());
                        }
                    }
                    mean_pow(&env, p).powf(p.recip()) / sys.norm(&terms, p)
                }
            }
        })
        .reduce(|| 0.0, f64::max)
}

fn split_diagnostics(sys: &SampledSystem, fam: &NestedFamily, c: f64, p: f64) -> Result<Option<SplitDiagnostics>> {
    let n = fam.len();
    if n < 2 || p != 2.0 {
        return Ok(None);
    }
    let eps = (c / (n as f64).ln()).sqrt();
    let squares: Vec<StepFunction> = match sys.system {
        GrowthSystem::Haar => {
            let hs: Vec<StepFunction> = fam.terms.iter().map(|&(j, _)| haar_function(j)).collect::<Result<_>>()?;
            fam.snapshots
                .iter()
                .map(|&k| {
                    let s = fam.terms[..k]
                        .iter()
                        .zip(&hs)
                        .fold(StepFunction::constant(0.0), |acc, (t, h)| combine_steps(1.0, &acc, t.1, h));
                    Ok(HaarExpansion::new(&s, Dyadic::ZERO, None)?.square_function())
                })
                .collect::<Result<_>>()?
        }
        GrowthSystem::Franklin => {
            let top = fam.terms.iter().map(|t| t.0).max().unwrap_or(2);
            let basis = FranklinBasis::with_max(Variant::Classical, top)?;
            fam.snapshots
                .iter()
                .map(|&k| {
                    let terms: Vec<(f64, &PiecewiseLinear)> =
                        fam.terms[..k].iter().map(|&(j, c)| (c, basis.function(j))).collect();
                    Ok(HaarExpansion::new(&linear_combination(&terms), Dyadic::ZERO, None)?.square_function())
                })
                .collect::<Result<_>>()?
        }
    };
    let big_p = max_steps(&squares.iter().collect::<Vec<_>>());
    let g = sys.grid_len();
    // p* on the same grid
    let mut s = vec![0.0; g];
    let mut env = vec![0.0f64; g];
    let mut done = 0;
    for &k in &fam.snapshots {
        for &(j, c) in &fam.terms[done..k] {
            sys.add_to(&mut s, j, c);
        }
        for (e, v) in env.iter_mut().zip(&s) {
            *e = e.max(v.abs());
        }
        done = k;
    }
    let norm2: f64 = fam.terms.iter().map(|t| t.1 * t.1).sum();
    let mut a = 0.0;
    let mut b = 0.0;
    for (i, e) in env.iter().enumerate() {
        let x = Dyadic::grid(2 * i as u64 + 1, sys.grid_level + 1);
        let pv = big_p.evaluate(x) / eps;
        a += (e * e - pv * pv).max(0.0);
        b += pv * pv;
    }
    Ok(Some(SplitDiagnostics {
        epsilon: eps,
        square_ratio: big_p.l2_norm() / norm2.sqrt(),
        a_term: a / g as f64 / norm2,
        b_term: b / g as f64 / norm2,
    }))
}

/// Lower-bound search and upper-bound sampling for every `n` of the config.
pub fn run_maximal_bound(system: GrowthSystem, mode: Mode, p: f64, cfg: &SearchConfig, seed: u64) -> Result<GrowthEstimate> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Domain(format!("exponent {p} outside (1, ∞)")));
    }
    if p != 2.0 && system != GrowthSystem::Haar {
        return Err(Error::Domain("p ≠ 2 is supported for the Haar system only".into()));
    }
    if cfg.n_values.is_empty() || cfg.n_values.iter().any(|&n| n < 2 || !n.is_power_of_two() || n > 1 << 12) {
        return Err(Error::Config("family sizes must be powers of two in 2..=4096".into()));
    }
    if cfg.window == 0 {
        return Err(Error::Config("window must be positive".into()));
    }
    let mut ns = cfg.n_values.clone();
    ns.sort_unstable();
    ns.dedup();
    let top = *ns.last().unwrap();
    let levels = top.trailing_zeros()
        + match mode {
            Mode::Sng => 0,
            Mode::Mon => MON_EXTRA_LEVELS,
            Mode::Full => FULL_EXTRA_LEVELS,
        };
    let sys = SampledSystem::new(system, levels, levels + 1 + cfg.extra_grid_levels)?;
    let c = match cfg.epsilon_c {
        Some(c) => c,
        None => super::cww::verify_cww(&super::cww::CwwConfig::default(), seed)?
            .get("c")
            .filter(|c| *c > 0.0)
            .unwrap_or(1.0),
    };
    let mut rows: Vec<GrowthRow> = Vec::new();
    let mut families: Vec<NestedFamily> = Vec::new();
    for &n in &ns {
        // full mode keeps a single-step chain as its nested family and takes
        // the lower bound from pointwise-sign multipliers
        let nested_mode = if mode == Mode::Full { Mode::Sng } else { mode };
        let (mut lower, mut fam) = lower_search(&sys, nested_mode, p, n, cfg, seed);
        if mode == Mode::Full {
            for extra in 0..=FULL_EXTRA_LEVELS {
                let l = n.trailing_zeros() + extra;
                let w = balanced_weight(l);
                let coeffs: Vec<(usize, f64)> = SampledSystem::universe(l).map(|j| (j, w(j))).collect();
                lower = lower.max(pointwise_sign_family(&sys, &coeffs, n, p));
            }
        }
        let mut carried = false;
        if let (Some(prev), Some(pf)) = (rows.last(), families.last()) {
            if prev.lower > lower {
                lower = prev.lower;
                fam = pf.clone();
                carried = true;
            }
        }
        let samples = match mode {
            Mode::Full => (cfg.upper_samples * 64 / n).max(1).min(cfg.upper_samples),
            _ => cfg.upper_samples,
        };
        let upper = upper_samples(&sys, mode, p, n, samples, seed);
        let split = if n <= cfg.diagnostics_max_n {
            split_diagnostics(&sys, &fam, c, p)?
        } else {
            None
        };
        rows.push(GrowthRow {
            n,
            lower,
            carried,
            lower_over_log: lower * lower / log2(n),
            upper_max: upper,
            upper_samples: samples,
            family_size: fam.len(),
            split,
        });
        families.push(fam);
    }
    let xs: Vec<f64> = rows.iter().map(|r| log2(r.n)).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.lower * r.lower).collect();
    let slope = linear_fit(&xs, &ys).map(|f| f.slope).unwrap_or(f64::NAN);
    let band = super::spread(&rows.iter().map(|r| r.lower_over_log).collect::<Vec<_>>());
    let monotone = rows.windows(2).all(|w| w[1].lower >= w[0].lower);
    Ok(GrowthEstimate {
        system,
        mode,
        p,
        seed,
        config: cfg.clone(),
        rows,
        slope,
        band_ratio: band,
        monotone,
        families,
    })
}

/// Report anchor for a growth run.
pub fn growth_anchor(system: GrowthSystem, mode: Mode) -> &'static str {
    match (system, mode) {
        (GrowthSystem::Haar, _) => "u35",
        (GrowthSystem::Franklin, Mode::Full) => "b4",
        (GrowthSystem::Franklin, _) => "u30",
    }
}

impl GrowthEstimate {
    pub fn table(&self) -> Table {
        let mut t = Table::new(
            "growth",
            &["n", "r_n", "r_n2_over_log_n", "upper_max", "upper_samples", "family_size", "carried"],
        );
        for r in &self.rows {
            t.push(vec![
                r.n as f64,
                r.lower,
                r.lower_over_log,
                r.upper_max,
                r.upper_samples as f64,
                r.family_size as f64,
                f64::from(u8::from(r.carried)),
            ]);
        }
        t
    }

    pub fn report(&self) -> ExperimentReport {
        let id = format!("growth_{}_{}_p{}", self.system, self.mode, self.p);
        let mut rep = ExperimentReport::new(&id, growth_anchor(self.system, self.mode), self.seed);
        rep.config("basis", self.system)
            .config("mode", self.mode)
            .config("p", self.p)
            .config("search", &self.config)
            .config("lower_coefficients", "level-balanced magnitudes, greedy signs and order")
            .config("upper_coefficients", "standard normal, normalized");
        rep.constant("slope_r2_vs_log_n", self.slope).constant("band_ratio", self.band_ratio);
        for r in &self.rows {
            rep.constant(&format!("r_{}", r.n), r.lower);
            rep.constant(&format!("upper_{}", r.n), r.upper_max);
        }
        rep.check("monotone", self.monotone, "r_n nondecreasing in n");
        rep.check(
            "log_band",
            self.band_ratio <= self.config.max_band_ratio,
            format!("max/min of r_n²/log n = {:.3} (limit {})", self.band_ratio, self.config.max_band_ratio),
        );
        let worst = self.rows.iter().map(|r| r.upper_max / r.lower).fold(0.0, f64::max);
        rep.constant("max_upper_over_lower", worst);
        rep.check(
            "upper_within_lower",
            worst <= self.config.max_upper_factor,
            format!("largest sampled/greedy ratio {worst:.3} (limit {})", self.config.max_upper_factor),
        );
        rep.table(self.table());
        let mut split = Table::new("split", &["n", "epsilon", "square_ratio", "a_term", "b_term"]);
        for r in &self.rows {
            if let Some(s) = &r.split {
                split.push(vec![r.n as f64, s.epsilon, s.square_ratio, s.a_term, s.b_term]);
            }
        }
        if !split.rows.is_empty() {
            rep.table(split);
        }
        rep.finish()
    }
}

/// Largest relative gap between grid-sampled ratios of the found families
/// (at the run's grid resolution) and exact piecewise evaluation.
pub fn oracle_deviation(est: &GrowthEstimate, max_n: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for (row, fam) in est.rows.iter().zip(&est.families) {
        if row.n > max_n {
            continue;
        }
        let levels = fam.terms.iter().map(|t| SampledSystem::level_of(t.0)).max().unwrap_or(0) + 1;
        let sys = SampledSystem::new(fam.system, levels, levels + 1 + est.config.extra_grid_levels)?;
        let sampled = nested_ratio(&sys, fam, est.p);
        let exact = exact_nested_ratio(fam, est.p)?;
        worst = worst.max((sampled - exact).abs() / exact);
    }
    Ok(worst)
}

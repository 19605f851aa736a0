//! Franklin functions, their periodic counterparts, the folded
//! reconstruction `u_n`, reproducing kernels and decay measurements.
//!
//! `f_n` (n ≥ 2) is the normalized element of `L_n ⊖ L_{n-1}`. In the nodal
//! hat basis of `L_n` a vector `c = G⁻¹d` is orthogonal to `L_{n-1}` exactly
//! when `d` annihilates the coefficient vectors of `L_{n-1}`; those are the
//! vectors whose entry at the new node is the mean of its two neighbours, so
//! `d = (-1/2, 1, -1/2)` around the new node. The Gram matrix is tridiagonal
//! (cyclic in the periodic case).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{build_nodes, ticks_to_f64, Dyadic, ONE};
use crate::pwl::{inner_product, linear_combination, PiecewiseLinear, TorusFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Classical,
    Periodic,
    Reconstructed,
}

impl Variant {
    /// Smallest valid index.
    pub fn first_index(self) -> usize {
        match self {
            Variant::Periodic => 1,
            _ => 0,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Classical => "classical",
            Variant::Periodic => "periodic",
            Variant::Reconstructed => "reconstructed",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(Variant::Classical),
            "periodic" => Ok(Variant::Periodic),
            "reconstructed" => Ok(Variant::Reconstructed),
            _ => Err(Error::Parse(format!(
                "unknown basis variant {s:?} (expected classical, periodic or reconstructed)"
            ))),
        }
    }
}

/// Solves a tridiagonal system; `sub[i]` multiplies `x[i-1]`, `sup[i]` multiplies `x[i+1]`.
fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut denom = diag[0];
    for i in 0..n {
        if i > 0 {
            denom = diag[i] - sub[i] * c[i - 1];
        }
        if denom.abs() < 1e-300 {
            return Err(Error::Construction("singular Gram matrix".into()));
        }
        c[i] = if i + 1 < n { sup[i] / denom } else { 0.0 };
        let prev = if i > 0 { sub[i] * x[i - 1] } else { 0.0 };
        x[i] = (rhs[i] - prev) / denom;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// Cyclic tridiagonal solve by Sherman–Morrison; `sub[0]` couples `x[0]`
/// to `x[n-1]` and `sup[n-1]` couples `x[n-1]` to `x[0]`.
fn solve_cyclic(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let alpha = sup[n - 1];
    let beta = sub[0];
    let gamma = -diag[0];
    let mut b = diag.to_vec();
    b[0] -= gamma;
    b[n - 1] -= alpha * beta / gamma;
    let x = solve_tridiagonal(sub, &b, sup, rhs)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = solve_tridiagonal(sub, &b, sup, &u)?;
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    Ok(x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect())
}

/// Gaussian elimination with partial pivoting, for the tiny periodic cases.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[piv][col].abs() < 1e-300 {
            return Err(Error::Construction("singular Gram matrix".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let m = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= m * a[col][k];
            }
            b[row] -= m * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

fn normalize(c: Vec<f64>, d: &[f64], tau: usize) -> Result<Vec<f64>> {
    // ‖f‖² = cᵀGc = dᵀc
    let norm2: f64 = c.iter().zip(d).map(|(a, b)| a * b).sum();
    if !(norm2 > 0.0) || !norm2.is_finite() {
        return Err(Error::Construction(format!(
            "orthogonal complement is degenerate (squared norm {norm2})"
        )));
    }
    let s = norm2.sqrt().recip() * c[tau].signum();
    Ok(c.into_iter().map(|v| v * s).collect())
}

fn classical(n: usize) -> Result<PiecewiseLinear> {
    match n {
        0 => return Ok(PiecewiseLinear::constant(1.0)),
        1 => {
            let r3 = 3f64.sqrt();
            return Ok(PiecewiseLinear::affine(-r3, 2.0 * r3));
        }
        _ => {}
    }
    let ns = build_nodes(n)?;
    let nodes = ns.nodes();
    let lens: Vec<f64> = (0..n)
        .map(|i| {
            let e = nodes.get(i + 1).map_or(ONE, |t| t.ticks());
            ticks_to_f64(e - nodes[i].ticks())
        })
        .collect();
    // unknowns: values at the n nodes and at 1-
    let m = n + 1;
    let mut diag = vec![0.0; m];
    let mut sub = vec![0.0; m];
    let mut sup = vec![0.0; m];
    for (i, &l) in lens.iter().enumerate() {
        diag[i] += l / 3.0;
        diag[i + 1] += l / 3.0;
        sup[i] = l / 6.0;
        sub[i + 1] = l / 6.0;
    }
    let tau = ns.new_node_index().expect("n >= 2");
    let mut d = vec![0.0; m];
    d[tau] = 1.0;
    d[tau - 1] = -0.5;
    d[tau + 1] = -0.5;
    let c = normalize(solve_tridiagonal(&sub, &diag, &sup, &d)?, &d, tau)?;
    PiecewiseLinear::new(nodes.to_vec(), c[..n].to_vec(), c[n])
}

fn periodic(n: usize) -> Result<PiecewiseLinear> {
    if n == 0 {
        return Err(Error::Domain("the periodic system is indexed from n = 1".into()));
    }
    if n == 1 {
        return Ok(PiecewiseLinear::constant(1.0));
    }
    let ns = build_nodes(n)?;
    let nodes = ns.nodes();
    let lens: Vec<f64> = (0..n)
        .map(|i| {
            let e = nodes.get(i + 1).map_or(ONE, |t| t.ticks());
            ticks_to_f64(e - nodes[i].ticks())
        })
        .collect();
    let tau = ns.new_node_index().expect("n >= 2");
    let mut d = vec![0.0; n];
    d[tau] += 1.0;
    d[tau - 1] -= 0.5;
    d[(tau + 1) % n] -= 0.5;
    let c = if n <= 4 {
        let mut g = vec![vec![0.0; n]; n];
        for (i, &l) in lens.iter().enumerate() {
            let r = (i + 1) % n;
            g[i][i] += l / 3.0;
            g[r][r] += l / 3.0;
            g[i][r] += l / 6.0;
            g[r][i] += l / 6.0;
        }
        solve_dense(g, d.clone())?
    } else {
        let mut diag = vec![0.0; n];
        let mut sub = vec![0.0; n];
        let mut sup = vec![0.0; n];
        for (i, &l) in lens.iter().enumerate() {
            let r = (i + 1) % n;
            diag[i] += l / 3.0;
            diag[r] += l / 3.0;
            sup[i] = l / 6.0;
            sub[r] = l / 6.0;
        }
        solve_cyclic(&sub, &diag, &sup, &d)?
    };
    let c = normalize(c, &d, tau)?;
    PiecewiseLinear::periodic(nodes.to_vec(), c)
}

/// `x ↦ f(2|x|)` in symmetric coordinates, written on `[0, 1)`: `f(2x)` on
/// `[0, 1/2)`, `f(0-)` at `1/2` and `f(2 - 2x)` on `(1/2, 1)`.
pub fn fold(f: &PiecewiseLinear) -> PiecewiseLinear {
    let knots = f.knots();
    let vals = f.values();
    let mut out_k = Vec::with_capacity(2 * knots.len() + 1);
    let mut out_v = Vec::with_capacity(2 * knots.len() + 1);
    for (k, v) in knots.iter().zip(vals) {
        out_k.push(k.halve());
        out_v.push(*v);
    }
    out_k.push(Dyadic::HALF);
    out_v.push(f.left_limit());
    for (k, v) in knots.iter().zip(vals).skip(1).rev() {
        out_k.push(k.halve().neg());
        out_v.push(*v);
    }
    PiecewiseLinear::periodic(out_k, out_v).expect("folded knots are increasing")
}

/// `f_n` of the given variant (`u_n` for the reconstructed one).
pub fn franklin_function(n: usize, variant: Variant) -> Result<PiecewiseLinear> {
    match variant {
        Variant::Classical => classical(n),
        Variant::Periodic => periodic(n),
        Variant::Reconstructed => Ok(fold(&classical(n)?)),
    }
}

/// The continuous reconstruction `u_n`.
pub fn reconstruct_u(n: usize) -> Result<PiecewiseLinear> {
    franklin_function(n, Variant::Reconstructed)
}

/// The point `t_n` where `f_n` concentrates (`None` for `n < 2`).
pub fn peak_node(n: usize) -> Option<Dyadic> {
    build_nodes(n).ok()?.new_node()
}

/// Append-only cache of one Franklin family.
#[derive(Clone, Debug)]
pub struct FranklinBasis {
    variant: Variant,
    functions: Vec<PiecewiseLinear>,
}

impl FranklinBasis {
    pub fn new(variant: Variant) -> Self {
        FranklinBasis {
            variant,
            functions: Vec::new(),
        }
    }

    /// A cache holding every index up to `n_max`.
    pub fn with_max(variant: Variant, n_max: usize) -> Result<Self> {
        let mut b = Self::new(variant);
        b.ensure(n_max)?;
        Ok(b)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// Largest cached index, if any.
    pub fn max_index(&self) -> Option<usize> {
        let len = self.functions.len();
        (len > 0).then(|| self.variant.first_index() + len - 1)
    }

    /// Extends the cache up to `n_max`; new indices are built in parallel.
    pub fn ensure(&mut self, n_max: usize) -> Result<()> {
        let start = self.variant.first_index() + self.functions.len();
        if n_max < start {
            return Ok(());
        }
        let variant = self.variant;
        let fresh: Vec<PiecewiseLinear> = (start..=n_max)
            .into_par_iter()
            .map(|n| franklin_function(n, variant))
            .collect::<Result<_>>()?;
        self.functions.extend(fresh);
        Ok(())
    }

    /// A cached function; panics if `n` has not been built.
    pub fn function(&self, n: usize) -> &PiecewiseLinear {
        &self.functions[n - self.variant.first_index()]
    }

    pub fn get(&self, n: usize) -> Option<&PiecewiseLinear> {
        n.checked_sub(self.variant.first_index())
            .and_then(|i| self.functions.get(i))
    }

    /// Cached functions in index order, starting at `first_index`.
    pub fn functions(&self) -> &[PiecewiseLinear] {
        &self.functions
    }

    /// `max |⟨f_i, f_j⟩ - δ_ij|` over the cached range.
    pub fn gram_deviation(&self) -> f64 {
        let fs = &self.functions;
        (0..fs.len())
            .into_par_iter()
            .map(|i| {
                (i..fs.len())
                    .map(|j| {
                        let want = if i == j { 1.0 } else { 0.0 };
                        (inner_product(&fs[i], &fs[j]) - want).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Serializable dump with Gram diagnostics.
    pub fn export(&self) -> BasisExport {
        BasisExport {
            variant: self.variant,
            first_index: self.variant.first_index(),
            gram_max_deviation: self.gram_deviation(),
            sign_convention: "f_n(t_n) > 0 for n >= 2".into(),
            functions: self.functions.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasisExport {
    pub variant: Variant,
    pub first_index: usize,
    pub gram_max_deviation: f64,
    pub sign_convention: String,
    pub functions: Vec<PiecewiseLinear>,
}

/// Index range summed by the kernel of level `level`.
fn kernel_range(variant: Variant, level: u32) -> std::ops::RangeInclusive<usize> {
    variant.first_index()..=(1usize << level)
}

/// `K_n(x, t) = Σ_{k ≤ 2^n} f_k(x) f_k(t)`; the basis must hold index `2^n`.
pub fn kernel(basis: &FranklinBasis, level: u32, x: Dyadic, t: Dyadic) -> f64 {
    kernel_range(basis.variant(), level)
        .map(|k| {
            let f = basis.function(k);
            f.evaluate(x) * f.evaluate(t)
        })
        .sum()
}

/// `t ↦ K_n(x, t)`.
pub fn kernel_row(basis: &FranklinBasis, level: u32, x: Dyadic) -> PiecewiseLinear {
    let terms: Vec<(f64, &PiecewiseLinear)> = kernel_range(basis.variant(), level)
        .map(|k| {
            let f = basis.function(k);
            (f.evaluate(x), f)
        })
        .collect();
    linear_combination(&terms)
}

/// Geometric envelope `|h(t)| ≤ C·scale·q^{N·d(t, centre)}` fitted to node samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    /// Decay of `|h|` per unit of `N·d`: the least-squares rate, raised where
    /// needed so that `C q^{N·d}` stays an envelope with `C` near the peak.
    pub q: f64,
    /// Smallest `C` making the envelope hold at every sample with the fitted `q`.
    pub c: f64,
    /// Geometric decay factor per node step (least squares on the step
    /// index), the larger of the two sides.
    pub node_ratio: f64,
    /// Largest ratio between consecutive node samples; exceeds the envelope
    /// ratio next to the peak and at the jump of a non-periodic function.
    pub max_step_ratio: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DecayFit {
    Fitted {
        n: usize,
        function: EnvelopeFit,
        kernel: Option<EnvelopeFit>,
    },
    InsufficientNodes {
        n: usize,
    },
}

impl DecayFit {
    pub fn function_fit(&self) -> Option<&EnvelopeFit> {
        match self {
            DecayFit::Fitted { function, .. } => Some(function),
            DecayFit::InsufficientNodes { .. } => None,
        }
    }
}

/// Samples below this are treated as underflow.
const TINY: f64 = 1e-280;
const KERNEL_FLOOR: f64 = 1e-11;

fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Fit from samples `(N·distance, |value|)`, each run listed moving away from
/// the centre and cut at the first sample below `rel_floor` times the peak.
fn fit_runs(runs: &[Vec<(f64, f64)>], scale: f64, rel_floor: f64) -> Option<EnvelopeFit> {
    let peak = runs.iter().flatten().fold(0.0f64, |m, s| m.max(s.1));
    let floor = (peak * rel_floor).max(TINY);
    let mut max_step_ratio = 0.0f64;
    let mut node_ratio = 0.0f64;
    let mut pts = Vec::new();
    for run in runs {
        let kept: Vec<(f64, f64)> = run.iter().copied().take_while(|s| s.1 > floor).collect();
        for w in kept.windows(2) {
            max_step_ratio = max_step_ratio.max(w[1].1 / w[0].1);
        }
        if kept.len() >= 3 {
            let steps: Vec<(f64, f64)> =
                kept.iter().enumerate().map(|(i, s)| (i as f64, s.1.ln())).collect();
            if let Some(sl) = least_squares_slope(&steps) {
                node_ratio = node_ratio.max(sl.exp());
            }
        }
        pts.extend(kept.iter().map(|&(x, v)| (x, (v / scale).ln())));
    }
    if pts.len() < 3 || node_ratio == 0.0 {
        return None;
    }
    // On meshes mixing two spacings one least-squares rate underfits the
    // coarse side; the envelope rate keeps C·q^x a bound with C near the peak.
    // It is read from x ≥ 2 on, since the jump at an endpoint next to t_n can
    // exceed the peak value itself.
    let top = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let envelope = pts
        .iter()
        .filter(|p| p.0 >= 2.0)
        .map(|&(x, ly)| (ly - top) / x)
        .fold(f64::NEG_INFINITY, f64::max);
    let slope = least_squares_slope(&pts)?.max(envelope);
    let c = pts
        .iter()
        .map(|&(x, ly)| (ly - slope * x).exp())
        .fold(0.0, f64::max);
    Some(EnvelopeFit {
        q: slope.exp(),
        c,
        node_ratio,
        max_step_ratio,
        samples: pts.len(),
    })
}

/// Node samples of `f` on both sides of node index `centre`.
fn runs_around(nodes: &[Dyadic], values: &[f64], centre: usize, scale_n: f64, periodic: bool) -> Vec<Vec<(f64, f64)>> {
    let c = nodes[centre].to_f64();
    let dist = |x: f64| {
        let d = (x - c).abs();
        if periodic {
            d.min(1.0 - d)
        } else {
            d
        }
    };
    let m = values.len();
    let pos = |i: usize| if i < nodes.len() { nodes[i].to_f64() } else { 1.0 };
    let (right_end, left_end) = if periodic {
        // walk half way round in each direction
        (centre + m / 2, centre as isize - (m as isize) / 2)
    } else {
        (m - 1, 0)
    };
    let mut right = Vec::new();
    for i in centre..=right_end {
        let idx = i % m;
        let x = if periodic { pos(idx) } else { pos(i) };
        right.push((scale_n * dist(x), values[idx].abs()));
    }
    let mut left = Vec::new();
    let mut i = centre as isize;
    while i >= left_end {
        let idx = i.rem_euclid(m as isize) as usize;
        left.push((scale_n * dist(pos(idx)), values[idx].abs()));
        i -= 1;
    }
    vec![right, left]
}

/// Decay of `f_n` away from `t_n`, and of the kernel row `K_level(x, ·)` at the
/// node of `Π_{2^level}` closest to `x` when `kernel_at` is given.
pub fn fit_decay(
    basis: &FranklinBasis,
    n: usize,
    kernel_at: Option<(u32, Dyadic)>,
) -> Result<DecayFit> {
    let variant = basis.variant();
    if variant == Variant::Reconstructed {
        return Err(Error::Domain("decay is fitted on the classical or periodic system".into()));
    }
    let ns = build_nodes(n)?;
    if n < 3 {
        return Ok(DecayFit::InsufficientNodes { n });
    }
    let periodic = variant == Variant::Periodic;
    let f = basis
        .get(n)
        .ok_or_else(|| Error::Domain(format!("index {n} not in the basis cache")))?;
    let mut vals = f.values().to_vec();
    if !periodic {
        vals.push(f.left_limit());
    }
    let tau = ns.new_node_index().expect("n >= 3");
    let runs = runs_around(ns.nodes(), &vals, tau, n as f64, periodic);
    let Some(function) = fit_runs(&runs, (n as f64).sqrt(), 0.0) else {
        return Ok(DecayFit::InsufficientNodes { n });
    };
    let kernel = match kernel_at {
        None => None,
        Some((level, x)) => {
            let size = 1usize << level;
            if basis.max_index().is_none_or(|m| m < size) {
                return Err(Error::Domain(format!(
                    "kernel of level {level} needs indices up to {size}"
                )));
            }
            let mesh = build_nodes(size)?;
            let centre = mesh.nodes().partition_point(|t| *t <= x).saturating_sub(1);
            let row = kernel_row(basis, level, mesh.nodes()[centre]);
            let mut kv: Vec<f64> = mesh.nodes().iter().map(|&t| row.evaluate(t)).collect();
            if !periodic {
                kv.push(row.left_limit());
            }
            let runs = runs_around(mesh.nodes(), &kv, centre, size as f64, periodic);
            // the row is a sum of O(1) terms, so cancellation leaves a rounding floor
            fit_runs(&runs, size as f64, KERNEL_FLOOR)
        }
    };
    Ok(DecayFit::Fitted {
        n,
        function,
        kernel,
    })
}

/// Whether the level-`n` subspace `Λ_n` is `L̄_{2^n}` or the periodic
/// convention `L̄_{2^{n-1}}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaConvention {
    Classical,
    Periodic,
}

impl LambdaConvention {
    /// Dyadic mesh level of `Λ_n`.
    pub fn mesh_level(self, n: u32) -> u32 {
        match self {
            LambdaConvention::Classical => n,
            LambdaConvention::Periodic => n.saturating_sub(1),
        }
    }

    /// The orthonormal system whose dyadic blocks define `ΔU_n`.
    pub fn system(self) -> Variant {
        match self {
            LambdaConvention::Classical => Variant::Reconstructed,
            LambdaConvention::Periodic => Variant::Periodic,
        }
    }
}

/// Coefficients of a function against `u_1, …, u_{2^N}` (or `f̄_1, …`),
/// giving the partial sums `U_n` and the blocks `ΔU_n`.
#[derive(Clone, Debug)]
pub struct UExpansion<'a> {
    basis: &'a FranklinBasis,
    levels: u32,
    /// `coeffs[j - 1] = ⟨f, φ_j⟩`
    coeffs: Vec<f64>,
}

impl<'a> UExpansion<'a> {
    /// Projects `f` onto indices `1..=2^levels`; the basis must hold them.
    pub fn new<F: TorusFunction + ?Sized>(basis: &'a FranklinBasis, f: &F, levels: u32) -> Result<Self> {
        let top = 1usize << levels;
        if basis.max_index().is_none_or(|m| m < top) {
            return Err(Error::Domain(format!("expansion needs indices up to {top}")));
        }
        let coeffs = (1..=top)
            .map(|j| inner_product(f, basis.function(j)))
            .collect();
        Ok(UExpansion {
            basis,
            levels,
            coeffs,
        })
    }

    /// Expansion with given coefficients `b_1, …, b_{2^levels}`.
    pub fn from_coefficients(basis: &'a FranklinBasis, coeffs: Vec<f64>) -> Result<Self> {
        let top = coeffs.len();
        if !top.is_power_of_two() {
            return Err(Error::Domain("coefficient count must be a power of two".into()));
        }
        if basis.max_index().is_none_or(|m| m < top) {
            return Err(Error::Domain(format!("expansion needs indices up to {top}")));
        }
        Ok(UExpansion {
            basis,
            levels: top.trailing_zeros(),
            coeffs,
        })
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// Index range `(2^{n-1}, 2^n]` of block `n` (`{1}` for `n = 0`).
    pub fn block(n: u32) -> std::ops::RangeInclusive<usize> {
        if n == 0 {
            1..=1
        } else {
            (1usize << (n - 1)) + 1..=1usize << n
        }
    }

    fn sum(&self, range: std::ops::RangeInclusive<usize>) -> PiecewiseLinear {
        let terms: Vec<(f64, &PiecewiseLinear)> = range
            .filter(|&j| self.coeffs[j - 1] != 0.0)
            .map(|j| (self.coeffs[j - 1], self.basis.function(j)))
            .collect();
        linear_combination(&terms)
    }

    /// `U_n(f) = Σ_{j ≤ 2^n} ⟨f, φ_j⟩ φ_j`.
    pub fn partial_sum(&self, n: u32) -> PiecewiseLinear {
        self.sum(1..=1usize << n.min(self.levels))
    }

    /// `ΔU_n(f)`, zero beyond the expansion depth.
    pub fn increment(&self, n: u32) -> PiecewiseLinear {
        if n > self.levels {
            return PiecewiseLinear::constant(0.0);
        }
        self.sum(Self::block(n))
    }

    /// `(Σ_{j ∈ block n} ⟨f, φ_j⟩²)^{1/2}`, the L² norm of `ΔU_n(f)`.
    pub fn increment_norm(&self, n: u32) -> f64 {
        if n > self.levels {
            return 0.0;
        }
        Self::block(n)
            .map(|j| self.coeffs[j - 1].powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// A continuous piecewise-linear function on the `2^-level` mesh with the given nodal values.
pub fn mesh_function(level: u32, values: Vec<f64>) -> Result<PiecewiseLinear> {
    if values.len() != 1usize << level {
        return Err(Error::Domain(format!(
            "a level-{level} mesh function needs {} values",
            1usize << level
        )));
    }
    let knots = (0..values.len() as u64).map(|i| Dyadic::grid(i, level)).collect();
    PiecewiseLinear::periodic(knots, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    const R3: f64 = 1.732_050_807_568_877_2;

    /// Gram–Schmidt of the raw hat basis of `L_n` with Simpson quadrature
    /// on every piece (exact for quadratics).
    fn dense_oracle(n: usize) -> Vec<f64> {
        let ns = build_nodes(n).unwrap();
        let mut pos: Vec<f64> = ns.nodes().iter().map(|t| t.to_f64()).collect();
        pos.push(1.0);
        let m = n + 1;
        // the hats of L_{n-1} first, then the new one, so the last
        // Gram–Schmidt output is orthogonal to L_{n-1}
        let tau = ns.new_node_index().unwrap();
        let mut order: Vec<usize> = (0..m).filter(|&i| i != tau).collect();
        order.push(tau);
        let hat = |i: usize| {
            let mut v = vec![0.0; m];
            v[i] = 1.0;
            v
        };
        let ip = |a: &[f64], b: &[f64]| {
            let mut s = 0.0;
            for i in 0..n {
                let l = pos[i + 1] - pos[i];
                let (a0, a1, b0, b1) = (a[i], a[i + 1], b[i], b[i + 1]);
                let am = 0.5 * (a0 + a1);
                let bm = 0.5 * (b0 + b1);
                s += l / 6.0 * (a0 * b0 + 4.0 * am * bm + a1 * b1);
            }
            s
        };
        let mut done: Vec<Vec<f64>> = Vec::new();
        for &i in &order {
            let mut v = hat(i);
            // coarse-space vectors: a hat at a node of Π_{n-1} in L_{n-1}
            // is the fine hat plus half the new hat on its neighbours
            if i != tau && (i + 1 == tau || i == tau + 1) {
                v[tau] = 0.5;
            }
            for _ in 0..2 {
                for u in &done {
                    let c = ip(&v, u);
                    for (x, y) in v.iter_mut().zip(u) {
                        *x -= c * y;
                    }
                }
            }
            let nrm = ip(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x /= nrm);
            done.push(v);
        }
        let mut last = done.pop().unwrap();
        if last[tau] < 0.0 {
            last.iter_mut().for_each(|x| *x = -*x);
        }
        last
    }

    fn nodal(f: &PiecewiseLinear) -> Vec<f64> {
        let mut v = f.values().to_vec();
        v.push(f.left_limit());
        v
    }

    #[test]
    fn explicit_low_indices() {
        let f0 = franklin_function(0, Variant::Classical).unwrap();
        assert_eq!(f0, PiecewiseLinear::constant(1.0));
        let f1 = franklin_function(1, Variant::Classical).unwrap();
        assert!((f1.evaluate(Dyadic::HALF)).abs() < 1e-15);
        assert!((f1.values()[0] + R3).abs() < 1e-15);
        assert!((f1.left_limit() - R3).abs() < 1e-15);
        let f2 = franklin_function(2, Variant::Classical).unwrap();
        let v = nodal(&f2);
        for (a, b) in v.iter().zip([-R3, R3, -R3]) {
            assert!((a - b).abs() < 1e-12, "{v:?}");
        }
    }

    #[test]
    fn matches_dense_gram_schmidt() {
        for n in [2, 3, 4, 5, 7, 8, 13, 16, 33] {
            let f = franklin_function(n, Variant::Classical).unwrap();
            let want = dense_oracle(n);
            for (a, b) in nodal(&f).iter().zip(&want) {
                assert!((a - b).abs() < 1e-9, "n = {n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn classical_orthonormal_and_on_nodes() {
        let b = FranklinBasis::with_max(Variant::Classical, 64).unwrap();
        assert!(b.gram_deviation() < 1e-10);
        for n in 2..=64 {
            let ns = build_nodes(n).unwrap();
            assert_eq!(b.function(n).knots(), ns.nodes());
            let t = ns.new_node().unwrap();
            assert!(b.function(n).evaluate(t) > 0.0);
        }
    }

    #[test]
    fn periodic_system() {
        let b = FranklinBasis::with_max(Variant::Periodic, 40).unwrap();
        assert!(b.gram_deviation() < 1e-10);
        assert_eq!(b.function(1), &PiecewiseLinear::constant(1.0));
        let f2 = b.function(2);
        assert!((f2.values()[0] + R3).abs() < 1e-12 && (f2.values()[1] - R3).abs() < 1e-12);
        for n in 1..=40 {
            assert!(b.function(n).is_continuous());
        }
        // f̄_n is orthogonal to every hat of L̄_{n-1}
        for n in 3..=20 {
            let coarse = build_nodes(n - 1).unwrap();
            for i in 0..n - 1 {
                let mut vals = vec![0.0; n - 1];
                vals[i] = 1.0;
                let hat = PiecewiseLinear::periodic(coarse.nodes().to_vec(), vals).unwrap();
                assert!(inner_product(&hat, b.function(n)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reconstruction() {
        assert_eq!(reconstruct_u(0).unwrap().values(), &[1.0, 1.0]);
        let u1 = reconstruct_u(1).unwrap();
        assert!(u1.evaluate(Dyadic::new(1, 2).unwrap()).abs() < 1e-15);
        assert!((u1.evaluate(Dyadic::new(1, 3).unwrap()) - R3 * (0.5 - 1.0)).abs() < 1e-15);
        let b = FranklinBasis::with_max(Variant::Reconstructed, 32).unwrap();
        assert!(b.gram_deviation() < 1e-10);
        for n in 0..=32 {
            let u = b.function(n);
            assert!(u.is_continuous());
            for i in 0..64 {
                let x = Dyadic::grid(i, 6);
                assert!((u.evaluate(x) - u.evaluate(x.neg())).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn u_is_orthogonal_to_coarse_space() {
        // n = 2^k + j: ⟨f, u_n⟩ = 0 for f ∈ L_{2^{k+1}}; here k = 1, n ∈ {3, 4}
        let b = FranklinBasis::with_max(Variant::Reconstructed, 16).unwrap();
        for n in 3..=16 {
            let k = (n - 1usize).ilog2();
            let coarse = build_nodes(1 << (k + 1)).unwrap();
            let m = coarse.len();
            for i in 0..=m {
                let mut vals = vec![0.0; m];
                let mut ll = 0.0;
                if i < m {
                    vals[i] = 1.0;
                } else {
                    ll = 1.0;
                }
                let hat = PiecewiseLinear::new(coarse.nodes().to_vec(), vals, ll).unwrap();
                assert!(inner_product(&hat, b.function(n)).abs() < 1e-12, "n = {n}, i = {i}");
            }
        }
    }

    #[test]
    fn kernel_examples() {
        let b = FranklinBasis::with_max(Variant::Classical, 16).unwrap();
        let h = Dyadic::HALF;
        assert!((kernel(&b, 0, h, h) - 1.0).abs() < 1e-15);
        let x = Dyadic::new(3, 4).unwrap();
        let t = Dyadic::new(11, 5).unwrap();
        for lvl in 0..=4 {
            assert!((kernel(&b, lvl, x, t) - kernel(&b, lvl, t, x)).abs() < 1e-12);
            assert!((kernel_row(&b, lvl, x).integral() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn decay_fits() {
        let b = FranklinBasis::with_max(Variant::Classical, 128).unwrap();
        assert_eq!(fit_decay(&b, 2, None).unwrap(), DecayFit::InsufficientNodes { n: 2 });
        for n in [16, 64, 100, 128] {
            let fit = fit_decay(&b, n, Some((6, Dyadic::new(5, 4).unwrap()))).unwrap();
            let DecayFit::Fitted { function, kernel, .. } = fit else {
                panic!("fit failed")
            };
            assert!(function.q < 1.0 && function.node_ratio < 0.5, "{function:?}");
            // n = 100 mixes two mesh spacings; C must stay near the peak value
            assert!(function.c < 10.0, "{function:?}");
            assert!(kernel.unwrap().q < 1.0);
        }
    }

    #[test]
    fn annihilation_of_lambda() {
        let b = FranklinBasis::with_max(Variant::Reconstructed, 64).unwrap();
        for n in 0..=4u32 {
            let lvl = LambdaConvention::Classical.mesh_level(n);
            let vals: Vec<f64> = (0..1usize << lvl).map(|i| ((i * 7 + 3) % 5) as f64 - 2.0).collect();
            let f = mesh_function(lvl, vals).unwrap();
            let e = UExpansion::new(&b, &f, 6).unwrap();
            for m in n..=6 {
                assert!(e.increment(m).l2_norm() < 1e-10, "n = {n}, m = {m}");
            }
        }
        let p = FranklinBasis::with_max(Variant::Periodic, 64).unwrap();
        for n in 1..=5u32 {
            let lvl = LambdaConvention::Periodic.mesh_level(n);
            let vals: Vec<f64> = (0..1usize << lvl).map(|i| (i as f64).sin()).collect();
            let f = mesh_function(lvl, vals).unwrap();
            let e = UExpansion::new(&p, &f, 6).unwrap();
            for m in n..=6 {
                assert!(e.increment(m).l2_norm() < 1e-10, "n = {n}, m = {m}");
            }
        }
    }
}

//! Node sets and shifted dyadic intervals on the torus `T = [0, 1)`.
//!
//! Every point handled by the crate is a dyadic rational stored on a fixed
//! grid of `2^-60` ("ticks"). Arithmetic modulo one is wrapping integer
//! arithmetic, so partition and nesting checks are exact.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Number of fractional bits of the tick grid.
pub const FRAC_BITS: u32 = 60;
/// One full turn of the torus, in ticks.
pub const ONE: u64 = 1 << FRAC_BITS;
const MASK: u64 = ONE - 1;

/// Finest dyadic level usable for intervals and shifts.
pub const MAX_LEVEL: u32 = FRAC_BITS;

/// A dyadic rational point of the torus, `ticks / 2^60` with `ticks < 2^60`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Dyadic(u64);

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic(0);
    pub const HALF: Dyadic = Dyadic(ONE / 2);

    /// The point `num / 2^exp` reduced modulo one.
    pub fn new(num: i64, exp: u32) -> Result<Self> {
        if exp > FRAC_BITS {
            return Err(Error::Domain(format!(
                "dyadic exponent {exp} exceeds the {FRAC_BITS}-bit grid"
            )));
        }
        let shift = FRAC_BITS - exp;
        // reduce mod 2^exp first so the shift cannot overflow
        let modulus = 1i128 << exp;
        let reduced = (num as i128).rem_euclid(modulus) as u64;
        Ok(Dyadic(reduced << shift))
    }

    /// `j / 2^level` for a level no finer than the grid.
    pub fn grid(j: u64, level: u32) -> Self {
        debug_assert!(level <= FRAC_BITS);
        Dyadic(j.wrapping_shl(FRAC_BITS - level) & MASK)
    }

    pub fn from_ticks(ticks: u64) -> Self {
        Dyadic(ticks & MASK)
    }

    pub fn ticks(self) -> u64 {
        self.0
    }

    /// Nearest grid point to a real number, reduced modulo one.
    pub fn snap(x: f64) -> Self {
        let frac = x - x.floor();
        let t = (frac * ONE as f64).round() as u64;
        Dyadic(t & MASK)
    }

    /// Parse `p/2^K`, `p/q` (q a power of two) or a decimal that is exactly dyadic.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((num, den)) = s.split_once('/') {
            let num: i64 = num
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad numerator in {s:?}")))?;
            let den = den.trim();
            let exp = if let Some(e) = den.strip_prefix("2^") {
                e.parse::<u32>()
                    .map_err(|_| Error::Parse(format!("bad exponent in {s:?}")))?
            } else {
                let d: u64 = den
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad denominator in {s:?}")))?;
                if d == 0 || !d.is_power_of_two() {
                    return Err(Error::Parse(format!("{s:?} is not a dyadic rational")));
                }
                d.trailing_zeros()
            };
            return Dyadic::new(num, exp);
        }
        parse_decimal(s)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / ONE as f64
    }

    /// Reduced `(numerator, exponent)` with an odd numerator (or `(0, 0)`).
    pub fn num_exp(self) -> (u64, u32) {
        if self.0 == 0 {
            return (0, 0);
        }
        let tz = self.0.trailing_zeros();
        (self.0 >> tz, FRAC_BITS - tz)
    }

    /// Smallest `K` with `self` a multiple of `2^-K`.
    pub fn resolution(self) -> u32 {
        self.num_exp().1
    }

    pub fn add(self, other: Dyadic) -> Dyadic {
        Dyadic(self.0.wrapping_add(other.0) & MASK)
    }

    pub fn sub(self, other: Dyadic) -> Dyadic {
        Dyadic(self.0.wrapping_sub(other.0) & MASK)
    }

    pub fn neg(self) -> Dyadic {
        Dyadic(self.0.wrapping_neg() & MASK)
    }

    pub fn add_ticks(self, ticks: u64) -> Dyadic {
        Dyadic(self.0.wrapping_add(ticks) & MASK)
    }

    /// Half of the point's coordinate in `[0, 1)`.
    pub fn halve(self) -> Dyadic {
        Dyadic(self.0 >> 1)
    }

    /// Distance on the torus, `min(|x - y|, 1 - |x - y|)`.
    pub fn torus_distance(self, other: Dyadic) -> f64 {
        let d = self.sub(other).0;
        let d = d.min(ONE - d);
        ticks_to_f64(d)
    }
}

/// An exact decimal such as `0.375` or `-1.25`, reduced modulo one.
fn parse_decimal(s: &str) -> Result<Dyadic> {
    let bad = || Error::Parse(format!("cannot parse {s:?} as a torus point"));
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() || frac.len() > 18 {
        return Err(bad());
    }
    if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    // only the fractional part matters modulo one
    let mut num: i128 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
    let mut den: i128 = 10i128.pow(frac.len() as u32);
    while den % 5 == 0 {
        if num % 5 != 0 {
            return Err(Error::Parse(format!("{s:?} is not exactly dyadic")));
        }
        num /= 5;
        den /= 5;
    }
    let exp = den.trailing_zeros();
    let num = if neg { -num } else { num };
    Dyadic::new(num as i64, exp)
}

/// Ticks going right from `a` to `b` (modulo one), in `[0, 2^60)`.
pub fn ticks_between(a: Dyadic, b: Dyadic) -> u64 {
    b.0.wrapping_sub(a.0) & MASK
}

pub fn ticks_to_f64(t: u64) -> f64 {
    t as f64 / ONE as f64
}

impl fmt::Debug for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (n, e) = self.num_exp();
        if e == 0 {
            write!(f, "{n}")
        } else {
            write!(f, "{n}/2^{e}")
        }
    }
}

impl Serialize for Dyadic {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.num_exp().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Dyadic {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let (num, exp) = <(u64, u32)>::deserialize(d)?;
        let valid = exp <= FRAC_BITS && if exp == 0 { num == 0 } else { num < (1u64 << exp) };
        if !valid {
            return Err(serde::de::Error::custom(format!(
                "({num}, {exp}) is not a point of [0, 1)"
            )));
        }
        Ok(Dyadic(num << (FRAC_BITS - exp)))
    }
}

/// The node set `Π_n` together with the decomposition `n = 2^k + j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeSet {
    n: usize,
    k: u32,
    j: usize,
    nodes: Vec<Dyadic>,
}

/// `n = 2^k + j` with `1 <= j <= 2^k`, defined for `n >= 2`.
pub fn decompose(n: usize) -> Option<(u32, usize)> {
    if n < 2 {
        return None;
    }
    let k = (n - 1).ilog2();
    Some((k, n - (1usize << k)))
}

/// Builds `Π_n`.
pub fn build_nodes(n: usize) -> Result<NodeSet> {
    if n == 0 {
        return Err(Error::Domain("node sets are indexed from n = 1".into()));
    }
    if n == 1 {
        return Ok(NodeSet {
            n,
            k: 0,
            j: 0,
            nodes: vec![Dyadic::ZERO],
        });
    }
    let (k, j) = decompose(n).expect("n >= 2");
    let nodes = (0..n)
        .map(|i| {
            if i <= 2 * j {
                Dyadic::grid(i as u64, k + 1)
            } else {
                Dyadic::grid((i - j) as u64, k)
            }
        })
        .collect();
    Ok(NodeSet { n, k, j, nodes })
}

impl NodeSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn nodes(&self) -> &[Dyadic] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Position of the node added when passing from `Π_{n-1}` to `Π_n`.
    pub fn new_node_index(&self) -> Option<usize> {
        (self.n >= 2).then(|| 2 * self.j - 1)
    }

    /// The node `t_n = t_{n,2j-1} = (2j-1)/2^{k+1}`.
    pub fn new_node(&self) -> Option<Dyadic> {
        self.new_node_index().map(|i| self.nodes[i])
    }
}

/// A shifted dyadic interval `[a, b)` of length `2^-level`, read modulo one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicInterval {
    pub level: u32,
    pub shift: Dyadic,
    /// Position `j - 1` of the interval in the shifted grid, `0 <= index < 2^level`.
    pub index: u64,
    pub left: Dyadic,
    pub right: Dyadic,
}

impl DyadicInterval {
    pub fn new(level: u32, shift: Dyadic, index: u64) -> Self {
        let left = shift.add(Dyadic::grid(index, level));
        let right = left.add_ticks(len_ticks(level));
        DyadicInterval {
            level,
            shift,
            index,
            left,
            right,
        }
    }

    pub fn len_ticks(&self) -> u64 {
        len_ticks(self.level)
    }

    pub fn length(&self) -> f64 {
        (self.level as f64).exp2().recip()
    }

    pub fn contains(&self, x: Dyadic) -> bool {
        ticks_between(self.left, x) < self.len_ticks() || self.level == 0
    }

    pub fn parent(&self) -> Option<DyadicInterval> {
        (self.level > 0).then(|| DyadicInterval::new(self.level - 1, self.shift, self.index >> 1))
    }
}

/// Length of a level-`n` interval in ticks (`2^60` for level zero).
pub fn len_ticks(level: u32) -> u64 {
    ONE >> level
}

/// The interval `I_{n,ξ}(x)` of the `ξ`-shifted dyadic grid at level `n` containing `x`.
pub fn locate_dyadic(x: Dyadic, level: u32, shift: Dyadic) -> Result<DyadicInterval> {
    if level > MAX_LEVEL {
        return Err(Error::Domain(format!(
            "level {level} is finer than the 2^-{MAX_LEVEL} grid"
        )));
    }
    let d = ticks_between(shift, x);
    let index = if level == 0 { 0 } else { d >> (FRAC_BITS - level) };
    Ok(DyadicInterval::new(level, shift, index))
}

/// Shifts `ξ = j / 2^K`, `0 <= j < 2^K`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftGrid {
    pub resolution: u32,
}

impl Default for ShiftGrid {
    fn default() -> Self {
        ShiftGrid { resolution: 12 }
    }
}

impl ShiftGrid {
    pub fn new(resolution: u32) -> Result<Self> {
        if resolution > 30 {
            return Err(Error::Domain(format!(
                "shift resolution {resolution} is too fine to enumerate"
            )));
        }
        Ok(ShiftGrid { resolution })
    }

    pub fn len(&self) -> usize {
        1 << self.resolution
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn shifts(&self) -> impl Iterator<Item = Dyadic> + '_ {
        (0..self.len() as u64).map(move |j| Dyadic::grid(j, self.resolution))
    }

    /// Whether `xi` lies on this grid.
    pub fn contains(&self, xi: Dyadic) -> bool {
        xi.resolution() <= self.resolution
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(num: i64, exp: u32) -> Dyadic {
        Dyadic::new(num, exp).unwrap()
    }

    #[test]
    fn small_node_sets() {
        assert_eq!(build_nodes(1).unwrap().nodes(), &[Dyadic::ZERO]);
        assert_eq!(build_nodes(3).unwrap().nodes(), &[d(0, 0), d(1, 2), d(1, 1)]);
        assert_eq!(
            build_nodes(4).unwrap().nodes(),
            &[d(0, 0), d(1, 2), d(1, 1), d(3, 2)]
        );
        assert_eq!(build_nodes(2).unwrap().nodes(), &[d(0, 0), d(1, 1)]);
        assert!(build_nodes(0).is_err());
    }

    #[test]
    fn single_point_refinement() {
        let mut prev = build_nodes(1).unwrap();
        for n in 2..=300 {
            let cur = build_nodes(n).unwrap();
            assert_eq!(cur.len(), n);
            assert!(cur.nodes().windows(2).all(|w| w[0] < w[1]));
            assert_eq!(cur.nodes()[0], Dyadic::ZERO);
            let added: Vec<_> = cur
                .nodes()
                .iter()
                .filter(|t| !prev.nodes().contains(t))
                .collect();
            assert_eq!(added.len(), 1, "n = {n}");
            let (k, j) = decompose(n).unwrap();
            assert_eq!(*added[0], d(2 * j as i64 - 1, k + 1));
            assert_eq!(cur.new_node(), Some(*added[0]));
            prev = cur;
        }
    }

    #[test]
    fn locate_examples() {
        let x = Dyadic::snap(0.3);
        let i = locate_dyadic(x, 1, Dyadic::ZERO).unwrap();
        assert_eq!((i.left, i.right), (d(0, 0), d(1, 1)));
        let i = locate_dyadic(x, 2, d(1, 3)).unwrap();
        assert_eq!((i.left, i.right), (d(1, 3), d(3, 3)));
        let i = locate_dyadic(Dyadic::snap(0.05), 3, d(7, 3)).unwrap();
        assert_eq!((i.left, i.right), (d(0, 0), d(1, 3)));
    }

    #[test]
    fn parse_forms() {
        assert_eq!(Dyadic::parse("3/2^4").unwrap(), d(3, 4));
        assert_eq!(Dyadic::parse("3/16").unwrap(), d(3, 4));
        assert_eq!(Dyadic::parse("0.75").unwrap(), d(3, 2));
        assert_eq!(Dyadic::parse("-1/4").unwrap(), d(3, 2));
        assert!(Dyadic::parse("1/3").is_err());
        assert!(Dyadic::parse("0.1").is_err());
    }

    #[test]
    fn serde_roundtrip() {
        let x = d(5, 7);
        let s = serde_json::to_string(&x).unwrap();
        assert_eq!(s, "[5,7]");
        assert_eq!(serde_json::from_str::<Dyadic>(&s).unwrap(), x);
        assert!(serde_json::from_str::<Dyadic>("[9,3]").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn located_interval_contains_and_nests(x in 0u64..ONE, level in 0u32..20, xi in 0u64..4096) {
                let x = Dyadic::from_ticks(x);
                let xi = Dyadic::grid(xi, 12);
                let i = locate_dyadic(x, level, xi).unwrap();
                prop_assert!(i.contains(x));
                prop_assert_eq!(ticks_between(i.left, i.right) % ONE, len_ticks(level) % ONE);
                let child = locate_dyadic(x, level + 1, xi).unwrap();
                prop_assert!(ticks_between(i.left, child.left) + child.len_ticks() <= i.len_ticks());
                prop_assert_eq!(child.parent().unwrap(), i);
            }

            #[test]
            fn shifted_intervals_partition(level in 0u32..8, xi in 0u64..256) {
                let xi = Dyadic::grid(xi, 8);
                let m = 1u64 << level;
                let mut covered = 0u64;
                for idx in 0..m {
                    let i = DyadicInterval::new(level, xi, idx);
                    covered += i.len_ticks();
                    let probe = i.left.add_ticks(i.len_ticks() / 2);
                    prop_assert_eq!(locate_dyadic(probe, level, xi).unwrap().index, idx);
                }
                prop_assert_eq!(covered, ONE);
            }
        }
    }
}

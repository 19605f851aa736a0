//! Summability tests for multiplier sequences `w(n) = C n^a (log n)^b (log log n)^c`
//! (base-2 logarithms).
//!
//! Series of such terms are classified by the integral test applied after
//! the substitutions `x = e^u`, `u = e^v`, which turn `log` factors into
//! powers; tails are bracketed by numerical integrals in the same variables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ExperimentReport;
use crate::error::{Error, Result};

const LN2: f64 = std::f64::consts::LN_2;

/// `C n^a (log₂ n)^b (log₂ log₂ n)^c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLog {
    pub scale: f64,
    pub power: f64,
    pub log_power: f64,
    pub loglog_power: f64,
}

impl PowerLog {
    pub const ONE: PowerLog = PowerLog {
        scale: 1.0,
        power: 0.0,
        log_power: 0.0,
        loglog_power: 0.0,
    };

    pub fn log() -> Self {
        PowerLog {
            log_power: 1.0,
            ..Self::ONE
        }
    }

    pub fn new(power: f64, log_power: f64, loglog_power: f64) -> Self {
        PowerLog {
            scale: 1.0,
            power,
            log_power,
            loglog_power,
        }
    }

    pub fn mul(self, o: PowerLog) -> PowerLog {
        PowerLog {
            scale: self.scale * o.scale,
            power: self.power + o.power,
            log_power: self.log_power + o.log_power,
            loglog_power: self.loglog_power + o.loglog_power,
        }
    }

    pub fn recip(self) -> PowerLog {
        PowerLog {
            scale: self.scale.recip(),
            power: -self.power,
            log_power: -self.log_power,
            loglog_power: -self.loglog_power,
        }
    }

    /// First integer `n` at which every factor is positive.
    pub fn start(&self) -> u64 {
        if self.loglog_power != 0.0 {
            3
        } else if self.log_power != 0.0 {
            2
        } else {
            1
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut v = self.scale;
        if self.power != 0.0 {
            v *= x.powf(self.power);
        }
        if self.log_power != 0.0 {
            v *= x.log2().powf(self.log_power);
        }
        if self.loglog_power != 0.0 {
            v *= x.log2().log2().powf(self.loglog_power);
        }
        v
    }
}

impl fmt::Display for PowerLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.scale != 1.0 {
            parts.push(format!("{}", self.scale));
        }
        for (name, e) in [("n", self.power), ("log", self.log_power), ("loglog", self.loglog_power)] {
            if e == 1.0 {
                parts.push(name.to_string());
            } else if e != 0.0 {
                parts.push(format!("{name}^{e}"));
            }
        }
        if parts.is_empty() {
            f.write_str("1")
        } else {
            f.write_str(&parts.join("*"))
        }
    }
}

/// Accepts products such as `log`, `log*loglog^2`, `log n · (log log n)²`,
/// `n^0.5`, `2*log` (`ln` is read as `log`; bases only change the scale).
impl FromStr for PowerLog {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut t: String = s
            .to_lowercase()
            .replace('²', "^2")
            .replace('³', "^3")
            .replace(['·', '×'], "*")
            .replace("ln", "log")
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '(' && *c != ')')
            .collect();
        while t.contains("logn") {
            t = t.replace("logn", "log");
        }
        if t.is_empty() {
            return Err(Error::Parse("empty multiplier".into()));
        }
        let mut out = PowerLog::ONE;
        for factor in t.split('*') {
            let (base, exp) = match factor.split_once('^') {
                Some((b, e)) => (
                    b,
                    e.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad exponent `{e}` in `{s}`")))?,
                ),
                None => (factor, 1.0),
            };
            match base {
                "n" => out.power += exp,
                "log" => out.log_power += exp,
                "loglog" => out.loglog_power += exp,
                _ => {
                    let c: f64 = base
                        .parse()
                        .map_err(|_| Error::Parse(format!("unknown factor `{factor}` in `{s}`")))?;
                    out.scale *= c.powf(exp);
                }
            }
        }
        if !out.scale.is_finite() || out.scale <= 0.0 {
            return Err(Error::Domain(format!("multiplier `{s}` is not positive")));
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Summability {
    Converges,
    Diverges,
    Inconclusive,
}

impl fmt::Display for Summability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Summability::Converges => "converges",
            Summability::Diverges => "diverges",
            Summability::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesTest {
    pub term: PowerLog,
    pub start: u64,
    pub cutoff: u64,
    pub partial_sum: f64,
    /// `S_N + ∫_{N+1}^∞` and `S_N + ∫_N^∞` when the tail is finite.
    pub bracket: Option<(f64, f64)>,
    /// Substitution depth at which the test decided (0: `x`, 1: `log x`, 2: `log log x`).
    pub depth: u32,
    pub verdict: Summability,
}

/// Integral of `g` over `[y0, ∞)` for `g(y) ~ y^{-s}`, `s > 1`, via `y = y0 e^z`.
fn tail_integral(g: impl Fn(f64) -> f64, y0: f64, s: f64) -> f64 {
    let z_max = (40.0 / (s - 1.0)).min(690.0 - y0.ln());
    let steps = 20_000;
    let h = z_max / steps as f64;
    let f = |z: f64| {
        let y = y0 * z.exp();
        g(y) * y
    };
    let mut acc = f(0.0) + f(z_max);
    for i in 1..steps {
        acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let body = acc * h / 3.0;
    // beyond z_max the integrand is within rounding of a pure power
    let y_end = y0 * z_max.exp();
    body + g(y_end) * y_end / (s - 1.0)
}

/// `∫_X^∞ t(x) dx` for a term of eventually decreasing type, if finite.
fn term_tail(t: PowerLog, x0: f64) -> Option<f64> {
    let (p, q, r) = (t.power, t.log_power, t.loglog_power);
    if p < -1.0 {
        Some(tail_integral(|x| t.eval(x), x0, -p))
    } else if p == -1.0 && q < -1.0 {
        // x = e^u: t dx = C (u / ln 2)^q (log₂(u / ln 2))^r du
        let g = |u: f64| t.scale * (u / LN2).powf(q) * if r != 0.0 { (u / LN2).log2().powf(r) } else { 1.0 };
        Some(tail_integral(g, x0.ln(), -q))
    } else if p == -1.0 && q == -1.0 && r < -1.0 {
        // u = e^v: t dx = C ln 2 ((v − ln ln 2) / ln 2)^r dv
        let c = LN2.ln();
        let g = |v: f64| t.scale * LN2 * ((v - c) / LN2).powf(r);
        Some(tail_integral(g, x0.ln().ln(), -r))
    } else {
        None
    }
}

/// Integral test for `Σ_{n ≥ start} t(n)`, partial sum up to `cutoff`.
pub fn series_test(term: PowerLog, cutoff: u64) -> SeriesTest {
    let start = term.start();
    let cutoff = cutoff.max(start + 1);
    let partial_sum: f64 = (start..=cutoff).map(|n| term.eval(n as f64)).sum();
    let (p, q, r) = (term.power, term.log_power, term.loglog_power);
    let (verdict, depth) = if p != -1.0 {
        (if p < -1.0 { Summability::Converges } else { Summability::Diverges }, 0)
    } else if q != -1.0 {
        (if q < -1.0 { Summability::Converges } else { Summability::Diverges }, 1)
    } else {
        (if r < -1.0 { Summability::Converges } else { Summability::Diverges }, 2)
    };
    // the integral test needs decreasing terms past the cutoff
    let decreasing = term.eval(cutoff as f64 * 2.0) < term.eval(cutoff as f64);
    let verdict = if verdict == Summability::Converges && !decreasing {
        Summability::Inconclusive
    } else {
        verdict
    };
    let bracket = match verdict {
        Summability::Converges => match (term_tail(term, cutoff as f64 + 1.0), term_tail(term, cutoff as f64)) {
            (Some(lo), Some(hi)) if lo.is_finite() && hi.is_finite() => Some((partial_sum + lo, partial_sum + hi)),
            _ => None,
        },
        _ => None,
    };
    let verdict = if verdict == Summability::Converges && bracket.is_none() {
        Summability::Inconclusive
    } else {
        verdict
    };
    SeriesTest {
        term,
        start,
        cutoff,
        partial_sum,
        bracket,
        depth,
        verdict,
    }
}

/// Smallest index from which `f` is nondecreasing on a geometric grid up to `cutoff`.
fn monotone_from(f: impl Fn(f64) -> f64, start: u64, cutoff: u64) -> Option<u64> {
    let mut xs = vec![start as f64];
    while *xs.last().unwrap() < cutoff as f64 {
        let x = xs.last().unwrap();
        xs.push((x * 1.05).max(x + 1.0).floor().min(cutoff as f64));
    }
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let last_drop = (1..vals.len()).rev().find(|&i| vals[i] < vals[i - 1] * (1.0 - 1e-12));
    match last_drop {
        None => Some(start),
        Some(i) if i + 1 < vals.len() => Some(xs[i] as u64),
        Some(_) => None,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultiplierCheck {
    pub w: PowerLog,
    /// `Σ 1/(n w(n))`.
    pub omega: SeriesTest,
    /// `Σ 1/(δ(k) k log k)` with `δ = w / log`.
    pub d3: SeriesTest,
    /// Index from which `w` is nondecreasing (on the sampled grid).
    pub w_monotone_from: Option<u64>,
    /// Index from which `w / log` is nondecreasing.
    pub ratio_monotone_from: Option<u64>,
}

pub fn check_multiplier(w: PowerLog, cutoff: u64) -> Result<MultiplierCheck> {
    if !(w.scale > 0.0 && w.scale.is_finite()) {
        return Err(Error::Domain(format!("multiplier {w} is not positive")));
    }
    if cutoff < 8 {
        return Err(Error::Config("cutoff must be at least 8".into()));
    }
    let inv_nw = w.mul(PowerLog::new(1.0, 0.0, 0.0)).recip();
    let delta = w.mul(PowerLog::log().recip());
    let d3 = delta.mul(PowerLog::new(1.0, 1.0, 0.0)).recip();
    let start = w.start().max(2);
    Ok(MultiplierCheck {
        w,
        omega: series_test(inv_nw, cutoff),
        d3: series_test(d3, cutoff),
        w_monotone_from: monotone_from(|x| w.eval(x), start, cutoff),
        ratio_monotone_from: monotone_from(|x| delta.eval(x), start, cutoff),
    })
}

impl MultiplierCheck {
    pub fn report(&self, seed: u64) -> ExperimentReport {
        let mut rep = ExperimentReport::new("multiplier", "omega", seed);
        rep.config("w", self.w.to_string())
            .config("cutoff", self.omega.cutoff)
            .config("log_base", 2);
        rep.constant("omega_partial_sum", self.omega.partial_sum)
            .constant("d3_partial_sum", self.d3.partial_sum);
        for (name, t) in [("omega", &self.omega), ("d3", &self.d3)] {
            if let Some((lo, hi)) = t.bracket {
                rep.constant(&format!("{name}_sum_lower"), lo);
                rep.constant(&format!("{name}_sum_upper"), hi);
            }
            rep.note(format!("{name}: Σ {} {} (integral test at depth {})", t.term, t.verdict, t.depth));
        }
        rep.config("omega_verdict", self.omega.verdict).config("d3_verdict", self.d3.verdict);
        rep.check(
            "w_nondecreasing",
            self.w_monotone_from.is_some(),
            format!("w nondecreasing from n = {:?}", self.w_monotone_from),
        );
        rep.check(
            "ratio_increasing",
            self.ratio_monotone_from.is_some(),
            format!("w/log nondecreasing from n = {:?}", self.ratio_monotone_from),
        );
        rep.check(
            "series_agree",
            self.omega.verdict == self.d3.verdict,
            format!("omega {} / d3 {}", self.omega.verdict, self.d3.verdict),
        );
        rep.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_common_spellings() {
        let a: PowerLog = "log n · (log log n)²".parse().unwrap();
        let b: PowerLog = "log*loglog^2".parse().unwrap();
        assert_eq!(a, b);
        assert_eq!(a, PowerLog::new(0.0, 1.0, 2.0));
        assert_eq!("logn".parse::<PowerLog>().unwrap(), PowerLog::log());
        assert_eq!("n^0.5".parse::<PowerLog>().unwrap(), PowerLog::new(0.5, 0.0, 0.0));
        assert!("sin n".parse::<PowerLog>().is_err());
        assert!("-1*log".parse::<PowerLog>().is_err());
        assert!("0*log".parse::<PowerLog>().is_err());
    }

    #[test]
    fn display_round_trips() {
        for s in ["log", "log*loglog^2", "n^0.5", "3*log^1.5"] {
            let w: PowerLog = s.parse().unwrap();
            assert_eq!(w.to_string().parse::<PowerLog>().unwrap(), w);
        }
    }

    #[test]
    fn classical_examples() {
        let c = check_multiplier(PowerLog::log(), 1 << 20).unwrap();
        assert_eq!(c.omega.verdict, Summability::Diverges);
        let c = check_multiplier("log*loglog".parse().unwrap(), 1 << 20).unwrap();
        assert_eq!(c.omega.verdict, Summability::Diverges);
        let c = check_multiplier("log*loglog^2".parse().unwrap(), 1 << 20).unwrap();
        assert_eq!(c.omega.verdict, Summability::Converges);
        assert_eq!(c.d3.verdict, Summability::Converges);
        let (lo, hi) = c.omega.bracket.unwrap();
        assert!(lo < hi && lo > c.omega.partial_sum);
    }

    #[test]
    fn bracket_contains_known_sum() {
        // Σ_{n ≥ 1} n^{-2} = π²/6
        let t = series_test(PowerLog::new(-2.0, 0.0, 0.0), 1000);
        let (lo, hi) = t.bracket.unwrap();
        let exact = std::f64::consts::PI.powi(2) / 6.0;
        assert!(lo <= exact + 1e-9 && exact <= hi + 1e-9, "{lo} {exact} {hi}");
        assert!(hi - lo < 2e-6);
    }

    #[test]
    fn log_squared_tail_is_exact() {
        // ∫_X^∞ dx / (x log₂² x) = ln 2 / log₂ X
        let t = PowerLog::new(-1.0, -2.0, 0.0);
        let x = 1024.0;
        let got = term_tail(t, x).unwrap();
        assert!((got - LN2 / 10.0).abs() < 1e-8, "{got}");
    }

    #[test]
    fn monotonicity_index() {
        let c = check_multiplier(PowerLog::log(), 1 << 16).unwrap();
        assert_eq!(c.w_monotone_from, Some(2));
        assert_eq!(c.ratio_monotone_from, Some(2));
        let c = check_multiplier("log^0.5".parse().unwrap(), 1 << 16).unwrap();
        assert_eq!(c.ratio_monotone_from, None);
    }
}

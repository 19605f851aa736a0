//! Command-line front end: `franklin <command> [flags]`.
//!
//! Precedence of settings is flag > `FRANKLIN_*` environment variable >
//! `--config` file > default. The config file is flat `key = value` text
//! using the long flag names; `command` and `anchor` select what to run.
//! Every report run also writes its resolved settings as `<id>.cfg`, which
//! replays the run when passed back through `--config`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::franklin::{FranklinBasis, Variant};
use crate::haar::{haar_function, haar_increment, haar_partial_sum, square_function};
use crate::lab::block::{verify_block_bound, BlockConfig};
use crate::lab::convergence::{demo_convergence, CoefficientRule, ConvergenceConfig, PolynomialRule};
use crate::lab::cww::{verify_cww, CwwConfig};
use crate::lab::growth::{run_maximal_bound, GrowthSystem, Mode, SearchConfig};
use crate::lab::lemmas::{
    verify_haar_of_delta_u, verify_increment_vs_maximal, verify_kernel_integral, verify_majorant_lemma,
    verify_monotone_majorant, HaarOfIncrementSweep, IncrementSweep, LemmaConfig, MajorantSweep,
};
use crate::lab::main_lemma::{verify_main_lemma, MainLemmaConfig};
use crate::lab::multiplier::{check_multiplier, PowerLog};
use crate::lab::{ExperimentReport, Table};
use crate::maximal::{dyadic_maximal, MaximalEvaluator};
use crate::mesh::Dyadic;
use crate::pwl::{PiecewiseLinear, StepFunction, TorusFunction};

/// Report anchors accepted by `verify`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Anchor {
    X5,
    X21,
    L7,
    X1,
    X22,
    X2,
    X10,
    Cww,
    B4,
    U30,
    U35,
    D2,
    Omega,
}

impl Anchor {
    pub const ALL: [Anchor; 13] = [
        Anchor::X5,
        Anchor::X21,
        Anchor::L7,
        Anchor::X1,
        Anchor::X22,
        Anchor::X2,
        Anchor::X10,
        Anchor::Cww,
        Anchor::B4,
        Anchor::U30,
        Anchor::U35,
        Anchor::D2,
        Anchor::Omega,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Anchor::X5 => "x5",
            Anchor::X21 => "x21",
            Anchor::L7 => "L7",
            Anchor::X1 => "x1",
            Anchor::X22 => "x22",
            Anchor::X2 => "x2",
            Anchor::X10 => "x10",
            Anchor::Cww => "cww",
            Anchor::B4 => "b4",
            Anchor::U30 => "u30",
            Anchor::U35 => "u35",
            Anchor::D2 => "d2",
            Anchor::Omega => "omega",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Anchor::X5 => "block bound ‖Σ|a_n u_n|‖₂ ≲ ‖a‖₂",
            Anchor::X21 => "majorant λ_{J,n} for ΔU_n of functions supported on J",
            Anchor::L7 => "|∫fλ| ≤ ‖λ‖₁ Mf(a) for unimodal λ",
            Anchor::X1 => "shifted Haar increments of Λ_m functions against Mf",
            Anchor::X22 => "∫ f ΔU_m(χ_I) against Mf at the endpoints of I",
            Anchor::X2 => "Haar averages of ΔU_m f against the four-point maximal function",
            Anchor::X10 => "main lemma: min over ξ of ‖sup_λ S_ξ(f_λ)‖₂ / ‖f‖₂",
            Anchor::Cww => "good-λ inequality for the dyadic maximal and square functions",
            Anchor::B4 => "growth of max_k |g_k| for arbitrary multipliers (Franklin)",
            Anchor::U30 => "growth of max_k |g_k| for nested index sets (Franklin)",
            Anchor::U35 => "L^p growth for nested index sets (Haar)",
            Anchor::D2 => "block maxima δ_k of non-overlapping Franklin series",
            Anchor::Omega => "multiplier summability Σ 1/(n w(n))",
        }
    }

    fn randomized(self) -> bool {
        self != Anchor::Omega
    }
}

impl fmt::Display for Anchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn anchor_list() -> String {
    Anchor::ALL.iter().map(|a| a.name()).collect::<Vec<_>>().join(", ")
}

impl FromStr for Anchor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Anchor::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown anchor `{s}`; valid anchors: {}", anchor_list())))
    }
}

impl Serialize for Anchor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

fn parse_xi_grid(s: &str) -> std::result::Result<u32, String> {
    let t = s.trim();
    let k = t.strip_prefix("2^-").unwrap_or(t);
    k.parse::<u32>()
        .map_err(|_| format!("expected `2^-K` or `K`, got `{s}`"))
        .and_then(|k| if k <= 16 { Ok(k) } else { Err("ξ grid finer than 2^-16".into()) })
}

#[derive(Parser, Debug, Serialize)]
#[command(name = "franklin", version, about = "Franklin system and shifted Haar experiments")]
#[serde(rename_all = "kebab-case")]
pub struct Cli {
    /// Flat `key = value` file supplying defaults for any flag.
    #[arg(long, global = true, env = "FRANKLIN_CONFIG")]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Seed for every randomized command.
    #[arg(long, global = true, env = "FRANKLIN_SEED")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Resolution `K` (sample grids of 2^K points, Haar polynomial size).
    #[arg(long, global = true, env = "FRANKLIN_RESOLUTION")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<u32>,
    /// Shift grid `2^-K` for ξ.
    #[arg(long = "xi-grid", global = true, env = "FRANKLIN_XI_GRID", value_parser = parse_xi_grid)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi_grid: Option<u32>,
    /// Output directory for reports and CSV files.
    #[arg(long, global = true, env = "FRANKLIN_OUT", default_value = "reports")]
    #[serde(skip)]
    pub out: PathBuf,
    /// Write JSON reports (with `--csv` absent, only JSON).
    #[arg(long, global = true)]
    #[serde(skip)]
    pub json: bool,
    /// Write CSV tables (with `--json` absent, only CSV).
    #[arg(long, global = true)]
    #[serde(skip)]
    pub csv: bool,
    #[command(subcommand)]
    #[serde(skip)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Serialize Franklin functions with Gram diagnostics.
    GenBasis(GenBasisArgs),
    /// Sample shifted Haar partial sums, increments, square and maximal functions.
    Haar(HaarArgs),
    /// Run the verifier for one anchor.
    Verify(VerifyArgs),
    /// Lower-bound search and upper-bound sampling for the growth of A_n.
    EstimateAn(EstimateArgs),
    /// Block maxima of non-overlapping Franklin series.
    DemoConvergence(ConvergenceArgs),
    /// Summability of Σ 1/(n w(n)) and Σ 1/(δ(k) k log k).
    CheckMultiplier(MultiplierArgs),
    /// List anchors, or summarize the reports in the output directory.
    Report(ReportArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenBasis(_) => "gen-basis",
            Command::Haar(_) => "haar",
            Command::Verify(_) => "verify",
            Command::EstimateAn(_) => "estimate-an",
            Command::DemoConvergence(_) => "demo-convergence",
            Command::CheckMultiplier(_) => "check-multiplier",
            Command::Report(_) => "report",
        }
    }

    fn settings(&self) -> Value {
        let v = match self {
            Command::GenBasis(a) => serde_json::to_value(a),
            Command::Haar(a) => serde_json::to_value(a),
            Command::Verify(a) => serde_json::to_value(a),
            Command::EstimateAn(a) => serde_json::to_value(a),
            Command::DemoConvergence(a) => serde_json::to_value(a),
            Command::CheckMultiplier(a) => serde_json::to_value(a),
            Command::Report(a) => serde_json::to_value(a),
        };
        v.unwrap_or(Value::Null)
    }
}

const COMMANDS: [&str; 7] = [
    "gen-basis",
    "haar",
    "verify",
    "estimate-an",
    "demo-convergence",
    "check-multiplier",
    "report",
];

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct GenBasisArgs {
    #[arg(long, env = "FRANKLIN_VARIANT", default_value = "classical")]
    pub variant: Variant,
    #[arg(long = "max-n", env = "FRANKLIN_MAX_N", default_value_t = 64)]
    pub max_n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HaarOp {
    Partial,
    Increment,
    Square,
    Maximal,
    DyadicMaximal,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct HaarArgs {
    #[arg(long, value_enum, env = "FRANKLIN_OP", default_value = "square")]
    pub op: HaarOp,
    /// `franklin:N`, `periodic:N`, `u:N`, `haar:N`, or cell values `steps:v0,v1,…`
    /// (length a power of two).
    #[arg(long, env = "FRANKLIN_INPUT", default_value = "franklin:5")]
    pub input: String,
    /// Shift ξ as `p/2^K`.
    #[arg(long, env = "FRANKLIN_XI", default_value = "0")]
    pub xi: String,
    /// Level n of the partial sum or increment.
    #[arg(long, env = "FRANKLIN_LEVEL", default_value_t = 2)]
    pub level: u32,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct VerifyArgs {
    /// One of x5, x21, L7, x1, x22, x2, x10, cww, b4, u30, u35, d2, omega.
    pub anchor: Anchor,
    /// Trials (per swept cell for the lemmas).
    #[arg(long, env = "FRANKLIN_TRIALS")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// Largest block level for x5.
    #[arg(long, env = "FRANKLIN_K")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    /// Multiplies random inputs; constants must not depend on it.
    #[arg(long, env = "FRANKLIN_SCALE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    /// Random functions for x10 and cww.
    #[arg(long, env = "FRANKLIN_FUNCTIONS")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub functions: Option<usize>,
    /// Exponent p for u35.
    #[arg(long, env = "FRANKLIN_P")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Largest family size for b4, u30, u35.
    #[arg(long = "n-max", env = "FRANKLIN_N_MAX")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    /// Family mode for u30 and u35.
    #[arg(long, env = "FRANKLIN_MODE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    /// Multiplier for omega and d2.
    #[arg(long, env = "FRANKLIN_W")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<String>,
    /// Blocks for d2.
    #[arg(long, env = "FRANKLIN_BLOCKS")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocks: Option<u32>,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EstimateArgs {
    #[arg(long, env = "FRANKLIN_MODE", default_value = "mon")]
    pub mode: Mode,
    #[arg(long, env = "FRANKLIN_BASIS", default_value = "franklin")]
    pub basis: GrowthSystem,
    #[arg(long, env = "FRANKLIN_P", default_value_t = 2.0)]
    pub p: f64,
    #[arg(long = "n-min", env = "FRANKLIN_N_MIN", default_value_t = 4)]
    pub n_min: usize,
    #[arg(long = "n-max", env = "FRANKLIN_N_MAX", default_value_t = 1024)]
    pub n_max: usize,
    #[arg(long, env = "FRANKLIN_RESTARTS", default_value_t = 8)]
    pub restarts: usize,
    #[arg(long, env = "FRANKLIN_WINDOW", default_value_t = 8)]
    pub window: usize,
    #[arg(long = "upper-samples", env = "FRANKLIN_UPPER_SAMPLES", default_value_t = 16)]
    pub upper_samples: usize,
    /// `c` in ε_n = (c / ln n)^{1/2}; defaults to the fitted good-λ constant.
    #[arg(long = "epsilon-c", env = "FRANKLIN_EPSILON_C")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_c: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientKind {
    PowerLog,
    Zero,
    Single,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    Identity,
    Rearranged,
    Polynomials,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ConvergenceArgs {
    #[arg(long, env = "FRANKLIN_BLOCKS", default_value_t = 10)]
    pub blocks: u32,
    #[arg(long, value_enum, env = "FRANKLIN_COEFFICIENTS", default_value = "power-log")]
    pub coefficients: CoefficientKind,
    /// a_k = k^{-alpha} (ln(k + 1))^{-beta}.
    #[arg(long, env = "FRANKLIN_ALPHA", default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, env = "FRANKLIN_BETA", default_value_t = 1.1)]
    pub beta: f64,
    /// Nonzero index for `--coefficients single`.
    #[arg(long, env = "FRANKLIN_INDEX", default_value_t = 1)]
    pub index: usize,
    #[arg(long, value_enum, env = "FRANKLIN_SYSTEM", default_value = "identity")]
    pub system: SystemKind,
    #[arg(long = "max-terms", env = "FRANKLIN_MAX_TERMS", default_value_t = 3)]
    pub max_terms: usize,
    #[arg(long, env = "FRANKLIN_W", default_value = "log")]
    pub w: String,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct MultiplierArgs {
    /// Products of n^a, log^b, loglog^c, e.g. "log n · (log log n)²".
    #[arg(long, env = "FRANKLIN_W", default_value = "log")]
    pub w: String,
    #[arg(long, env = "FRANKLIN_CUTOFF", default_value_t = 1 << 20)]
    pub cutoff: u64,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ReportArgs {
    /// Print the anchor set.
    #[arg(long)]
    pub list: bool,
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("config line {}: expected `key = value`", i + 1)))?;
        let k = k.trim().trim_start_matches("--").to_string();
        let v = v.trim().trim_matches('"').to_string();
        if k.is_empty() {
            return Err(Error::Parse(format!("config line {}: empty key", i + 1)));
        }
        out.insert(k, v);
    }
    Ok(out)
}

fn env_name(key: &str) -> String {
    format!("FRANKLIN_{}", key.replace('-', "_").to_uppercase())
}

/// Appends settings from the config file that neither a flag nor the
/// environment already provides.
fn apply_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let path = strs
        .iter()
        .enumerate()
        .find_map(|(i, a)| {
            a.strip_prefix("--config=")
                .map(str::to_string)
                .or_else(|| (a == "--config").then(|| strs.get(i + 1).cloned()).flatten())
        })
        .or_else(|| std::env::var("FRANKLIN_CONFIG").ok());
    let Some(path) = path else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::Config(format!("cannot read config {path}: {e}")))?;
    let mut cfg = parse_config(&text)?;
    let mut out = args;
    let has_command = strs.iter().skip(1).any(|a| COMMANDS.contains(&a.as_str()));
    let command = cfg.remove("command");
    let anchor = cfg.remove("anchor");
    if !has_command {
        if let Some(c) = command {
            // right after the program name, so subcommand flags on the
            // command line still parse; global flags may follow it
            let mut head: Vec<OsString> = vec![c.into()];
            head.extend(anchor.map(OsString::from));
            let at = out.len().min(1);
            out.splice(at..at, head);
        }
    }
    for (k, v) in cfg {
        let given = strs.iter().any(|a| *a == format!("--{k}") || a.starts_with(&format!("--{k}=")));
        if given || std::env::var_os(env_name(&k)).is_some() {
            continue;
        }
        match v.as_str() {
            "true" => out.push(format!("--{k}").into()),
            "false" => {}
            _ => out.push(format!("--{k}={v}").into()),
        }
    }
    Ok(out)
}

/// `key = value` lines that replay a run through `--config`.
fn run_config(cli: &Cli) -> String {
    let mut lines = vec![format!("command = {}", cli.command.name())];
    let mut push = |v: Value| {
        if let Value::Object(m) = v {
            for (k, v) in m {
                let s = match v {
                    Value::String(s) => s,
                    Value::Null => continue,
                    other => other.to_string(),
                };
                lines.push(format!("{k} = {s}"));
            }
        }
    };
    push(serde_json::to_value(cli).unwrap_or(Value::Null));
    push(cli.command.settings());
    lines.join("\n") + "\n"
}

struct Output<'a> {
    dir: &'a Path,
    json: bool,
    csv: bool,
    config: String,
}

impl Output<'_> {
    fn save(&self, rep: &mut ExperimentReport) -> Result<()> {
        rep.write(self.dir, self.json, self.csv)?;
        fs::write(self.dir.join(format!("{}.cfg", rep.id)), &self.config)?;
        Ok(())
    }
}

fn require_seed(cli: &Cli) -> Result<u64> {
    cli.seed
        .ok_or_else(|| Error::Config(format!("`{}` is randomized and needs --seed", cli.command.name())))
}

fn lemma_config(cli: &Cli, a: &VerifyArgs, trials: usize) -> LemmaConfig {
    let d = LemmaConfig::default();
    LemmaConfig {
        trials: a.trials.unwrap_or(trials),
        xi_resolution: cli.xi_grid.unwrap_or(d.xi_resolution),
        grid_level: cli.resolution.unwrap_or(d.grid_level),
        scale: a.scale.unwrap_or(1.0),
    }
}

fn growth_config(n_min: usize, n_max: usize) -> Result<Vec<usize>> {
    if !(n_min.is_power_of_two() && n_max.is_power_of_two() && 2 <= n_min && n_min <= n_max) {
        return Err(Error::Config(format!("need powers of two 2 ≤ n-min ≤ n-max, got {n_min}, {n_max}")));
    }
    Ok((n_min.trailing_zeros()..=n_max.trailing_zeros()).map(|k| 1usize << k).collect())
}

fn verify(cli: &Cli, a: &VerifyArgs) -> Result<ExperimentReport> {
    let seed = if a.anchor.randomized() { require_seed(cli)? } else { cli.seed.unwrap_or(0) };
    match a.anchor {
        Anchor::X5 => verify_block_bound(
            &BlockConfig {
                k_max: a.k.unwrap_or(8),
                trials: a.trials.unwrap_or(100),
                ..Default::default()
            },
            seed,
        ),
        Anchor::X21 => verify_majorant_lemma(&lemma_config(cli, a, 100), &MajorantSweep::default(), seed),
        Anchor::L7 => verify_monotone_majorant(a.trials.unwrap_or(1000), a.scale.unwrap_or(1.0), seed),
        Anchor::X1 => verify_increment_vs_maximal(&lemma_config(cli, a, 340), &IncrementSweep::default(), seed),
        Anchor::X22 => verify_kernel_integral(&lemma_config(cli, a, 200), &DEFAULT_KERNEL_M, seed),
        Anchor::X2 => verify_haar_of_delta_u(&lemma_config(cli, a, 67), &HaarOfIncrementSweep::default(), seed),
        Anchor::X10 => {
            let d = MainLemmaConfig::default();
            verify_main_lemma(
                &MainLemmaConfig {
                    functions: a.functions.unwrap_or(d.functions),
                    xi_resolution: cli.xi_grid.unwrap_or(d.xi_resolution),
                    scale: a.scale.unwrap_or(1.0),
                    ..d
                },
                seed,
            )
        }
        Anchor::Cww => {
            let d = CwwConfig::default();
            verify_cww(
                &CwwConfig {
                    functions: a.functions.unwrap_or(d.functions),
                    resolution: cli.resolution.unwrap_or(d.resolution),
                    ..d
                },
                seed,
            )
        }
        Anchor::B4 | Anchor::U30 | Anchor::U35 => {
            let (system, mode, p) = match a.anchor {
                Anchor::B4 => (GrowthSystem::Franklin, Mode::Full, 2.0),
                Anchor::U30 => (GrowthSystem::Franklin, a.mode.unwrap_or(Mode::Mon), 2.0),
                _ => (GrowthSystem::Haar, a.mode.unwrap_or(Mode::Mon), a.p.unwrap_or(3.0)),
            };
            let cfg = SearchConfig {
                n_values: growth_config(4, a.n_max.unwrap_or(1024))?,
                ..Default::default()
            };
            Ok(run_maximal_bound(system, mode, p, &cfg, seed)?.report())
        }
        Anchor::D2 => {
            let cfg = ConvergenceConfig {
                blocks: a.blocks.unwrap_or(10),
                w: a.w.as_deref().unwrap_or("log").parse()?,
                ..Default::default()
            };
            demo_convergence(&cfg, seed)
        }
        Anchor::Omega => {
            let w: PowerLog = a.w.as_deref().unwrap_or("log*loglog^2").parse()?;
            Ok(check_multiplier(w, 1 << 20)?.report(seed))
        }
    }
}

/// Values of `m` swept by the x22 verifier.
pub const DEFAULT_KERNEL_M: [u32; 5] = [1, 2, 3, 4, 5];

fn parse_input(text: &str) -> Result<Box<dyn TorusFunction>> {
    let (kind, arg) = text
        .split_once(':')
        .ok_or_else(|| Error::Parse(format!("input `{text}`: expected kind:argument")))?;
    let index = || {
        arg.trim()
            .parse::<usize>()
            .map_err(|_| Error::Parse(format!("input `{text}`: bad index")))
    };
    let pl = |v: Variant| -> Result<Box<dyn TorusFunction>> {
        let f: PiecewiseLinear = crate::franklin::franklin_function(index()?, v)?;
        Ok(Box::new(f))
    };
    match kind.trim() {
        "franklin" => pl(Variant::Classical),
        "periodic" => pl(Variant::Periodic),
        "u" => pl(Variant::Reconstructed),
        "haar" => Ok(Box::new(haar_function(index()?)?)),
        "steps" => {
            let vals: Vec<f64> = arg
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse(format!("input `{text}`: bad value")))?;
            if !vals.len().is_power_of_two() {
                return Err(Error::Parse(format!("input `{text}`: need 2^k values")));
            }
            let level = vals.len().trailing_zeros();
            Ok(Box::new(StepFunction::from_shifted_grid(level, Dyadic::ZERO, &vals)))
        }
        other => Err(Error::Parse(format!("unknown input kind `{other}` (franklin, periodic, u, haar, steps)"))),
    }
}

fn haar(cli: &Cli, a: &HaarArgs, out: &Output) -> Result<bool> {
    let f = parse_input(&a.input)?;
    let xi = Dyadic::parse(&a.xi)?;
    let k = cli.resolution.unwrap_or(8);
    if k > 16 {
        return Err(Error::Config("resolution above 16".into()));
    }
    let sampled: Box<dyn Fn(Dyadic) -> f64> = match a.op {
        HaarOp::Partial => {
            let s = haar_partial_sum(f.as_ref(), a.level, xi)?;
            Box::new(move |x| s.evaluate(x))
        }
        HaarOp::Increment => {
            let s = haar_increment(f.as_ref(), a.level, xi)?;
            Box::new(move |x| s.evaluate(x))
        }
        HaarOp::Square => {
            let s = square_function(f.as_ref(), xi)?;
            Box::new(move |x| s.evaluate(x))
        }
        HaarOp::Maximal => {
            let ev = MaximalEvaluator::new(f.as_ref());
            Box::new(move |x| ev.at(x))
        }
        HaarOp::DyadicMaximal => {
            let m = dyadic_maximal(f.as_ref(), xi).lower;
            Box::new(move |x| m.evaluate(x))
        }
    };
    let mut t = Table::new("samples", &["x", "value"]);
    for i in 0..1u64 << k {
        let x = Dyadic::grid(i, k);
        t.push(vec![x.to_f64(), sampled(x)]);
    }
    let op = a.op.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    fs::create_dir_all(out.dir)?;
    let path = out.dir.join(format!("haar_{op}.csv"));
    fs::write(&path, t.to_csv())?;
    fs::write(out.dir.join(format!("haar_{op}.cfg")), &out.config)?;
    println!("PASS haar {op} [{}] {} samples -> {}", a.input, t.rows.len(), path.display());
    Ok(true)
}

fn gen_basis(a: &GenBasisArgs, out: &Output) -> Result<bool> {
    if a.max_n < a.variant.first_index() || a.max_n > 1 << 14 {
        return Err(Error::Config(format!("max-n {} outside the supported range", a.max_n)));
    }
    let basis = FranklinBasis::with_max(a.variant, a.max_n)?;
    let export = basis.export();
    // `--out basis.json` names the file; any other value is a directory.
    let path = if out.dir.extension().is_some_and(|e| e == "json") {
        out.dir.to_path_buf()
    } else {
        out.dir.join(format!("basis_{}.json", a.variant))
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&path, serde_json::to_string(&export)? + "\n")?;
    fs::write(path.with_extension("cfg"), &out.config)?;
    let ok = export.gram_max_deviation <= 1e-9;
    println!(
        "{} gen-basis [{}] n ≤ {} gram deviation {:e} -> {}",
        if ok { "PASS" } else { "FAIL" },
        a.variant,
        a.max_n,
        export.gram_max_deviation,
        path.display()
    );
    Ok(ok)
}

fn report(a: &ReportArgs, dir: &Path) -> Result<bool> {
    if a.list {
        for anchor in Anchor::ALL {
            println!("{:<6} {}", anchor.name(), anchor.description());
        }
        return Ok(true);
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("basis_")))
        .collect();
    paths.sort();
    let mut all = true;
    let mut any = false;
    for p in paths {
        let Ok(rep) = serde_json::from_str::<ExperimentReport>(&fs::read_to_string(&p)?) else {
            continue;
        };
        any = true;
        all &= rep.passed();
        println!("{}", rep.summary_line());
    }
    if !any {
        println!("no reports in {}", dir.display());
    }
    Ok(all && any)
}

fn execute(cli: &Cli) -> Result<bool> {
    let (json, csv) = if cli.json || cli.csv { (cli.json, cli.csv) } else { (true, true) };
    let out = Output {
        dir: &cli.out,
        json,
        csv,
        config: run_config(cli),
    };
    let started = Instant::now();
    let mut rep = match &cli.command {
        Command::GenBasis(a) => return gen_basis(a, &out),
        Command::Haar(a) => return haar(cli, a, &out),
        Command::Report(a) => return report(a, &cli.out),
        Command::Verify(a) => verify(cli, a)?,
        Command::EstimateAn(a) => {
            let seed = require_seed(cli)?;
            let cfg = SearchConfig {
                n_values: growth_config(a.n_min, a.n_max)?,
                restarts: a.restarts,
                window: a.window,
                upper_samples: a.upper_samples,
                epsilon_c: a.epsilon_c,
                ..Default::default()
            };
            run_maximal_bound(a.basis, a.mode, a.p, &cfg, seed)?.report()
        }
        Command::DemoConvergence(a) => {
            let seed = require_seed(cli)?;
            let cfg = ConvergenceConfig {
                blocks: a.blocks,
                coefficients: match a.coefficients {
                    CoefficientKind::PowerLog => CoefficientRule::PowerLog {
                        alpha: a.alpha,
                        beta: a.beta,
                    },
                    CoefficientKind::Zero => CoefficientRule::Zero,
                    CoefficientKind::Single => CoefficientRule::Single { index: a.index },
                },
                system: match a.system {
                    SystemKind::Identity => PolynomialRule::Identity,
                    SystemKind::Rearranged => PolynomialRule::Rearranged,
                    SystemKind::Polynomials => PolynomialRule::Polynomials { max_terms: a.max_terms },
                },
                w: a.w.parse()?,
                ..Default::default()
            };
            demo_convergence(&cfg, seed)?
        }
        Command::CheckMultiplier(a) => {
            let check = check_multiplier(a.w.parse()?, a.cutoff)?;
            println!("omega: Σ 1/(n w(n)) {} for w = {}", check.omega.verdict, check.w);
            check.report(cli.seed.unwrap_or(0))
        }
    };
    rep.runtime_ms = rep.runtime_ms.max(started.elapsed().as_millis() as u64);
    out.save(&mut rep)?;
    println!("{}", rep.summary_line());
    Ok(rep.passed())
}

/// Runs the command line `args` (program name first) and returns the exit
/// code: 0 on pass, 1 on a failed verdict, 2 on usage errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match apply_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e @ (Error::Config(_) | Error::Parse(_) | Error::Domain(_))) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors_round_trip() {
        for a in Anchor::ALL {
            assert_eq!(a.name().parse::<Anchor>().unwrap(), a);
        }
        let err = "x99".parse::<Anchor>().unwrap_err().to_string();
        assert!(err.contains("x5, x21, L7"));
    }

    #[test]
    fn config_parsing() {
        let m = parse_config("# run\ncommand = verify\nanchor=x5\n--seed = 7 # inline\n\n").unwrap();
        assert_eq!(m["command"], "verify");
        assert_eq!(m["anchor"], "x5");
        assert_eq!(m["seed"], "7");
        assert!(parse_config("nonsense").is_err());
    }

    #[test]
    fn xi_grid_forms() {
        assert_eq!(parse_xi_grid("2^-4"), Ok(4));
        assert_eq!(parse_xi_grid("6"), Ok(6));
        assert!(parse_xi_grid("2^-x").is_err());
    }

    #[test]
    fn run_config_lists_flags() {
        let cli = Cli::try_parse_from(["franklin", "--seed", "3", "verify", "x5", "--k", "2"]).unwrap();
        let text = run_config(&cli);
        assert!(text.contains("command = verify"));
        assert!(text.contains("anchor = x5"));
        assert!(text.contains("seed = 3"));
        assert!(text.contains("k = 2"));
        assert!(!text.contains("trials"));
    }
}

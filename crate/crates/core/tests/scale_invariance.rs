//! Measured constants must not depend on the amplitude of the random inputs.
use franklin::lab::lemmas::*;
use franklin::lab::main_lemma::{verify_main_lemma, MainLemmaConfig};
use franklin::lab::ExperimentReport;

const SCALES: [f64; 3] = [1e-3, 1.0, 1e3];

fn assert_invariant(name: &str, run: impl Fn(f64) -> ExperimentReport, keys: &[&str]) {
    let reports: Vec<ExperimentReport> = SCALES.iter().map(|&s| run(s)).collect();
    for key in keys {
        let base = reports[1].get(key).unwrap_or_else(|| panic!("{name}: no constant {key}"));
        for (s, rep) in SCALES.iter().zip(&reports) {
            let v = rep.get(key).unwrap();
            assert!((v - base).abs() <= 1e-6 * base.abs().max(1e-12), "{name} {key}: {v} at scale {s} vs {base}");
        }
    }
    for (s, rep) in SCALES.iter().zip(&reports) {
        assert_eq!(rep.passed(), reports[1].passed(), "{name}: verdict changes at scale {s}");
    }
}

fn cfg(trials: usize, scale: f64) -> LemmaConfig {
    LemmaConfig { trials, scale, ..Default::default() }
}

#[test]
fn lemma_constants_are_scale_free() {
    assert_invariant("x21", |s| verify_majorant_lemma(&cfg(8, s), &MajorantSweep::default(), 4).unwrap(), &["C", "max_l1_over_len"]);
    assert_invariant("L7", |s| verify_monotone_majorant(200, s, 4).unwrap(), &["max_ratio"]);
    assert_invariant("x1", |s| verify_increment_vs_maximal(&cfg(20, s), &IncrementSweep::default(), 4).unwrap(), &["C"]);
    assert_invariant("x22", |s| verify_kernel_integral(&cfg(30, s), &[1, 2, 3], 4).unwrap(), &["C"]);
    assert_invariant("x2", |s| verify_haar_of_delta_u(&cfg(10, s), &HaarOfIncrementSweep::default(), 4).unwrap(), &["C"]);
}

#[test]
fn main_lemma_ratio_is_scale_free() {
    assert_invariant(
        "x10",
        |s| verify_main_lemma(&MainLemmaConfig { functions: 6, scale: s, ..Default::default() }, 4).unwrap(),
        &["mean_min_ratio", "cv_min_ratio"],
    );
}

//! Classifies Σ 1/(n w(n)) for a few multipliers.
use franklin::lab::multiplier::check_multiplier;

fn main() -> franklin::Result<()> {
    for w in ["log", "log * loglog", "log * loglog^2", "n^0.1", "log^2"] {
        let check = check_multiplier(w.parse()?, 1 << 20)?;
        println!("w = {:<18} Σ 1/(n w(n)) {:<12} Σ 1/(δ(k) k log k) {}", check.w.to_string(), check.omega.verdict.to_string(), check.d3.verdict);
    }
    Ok(())
}

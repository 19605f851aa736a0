//! Fits the good-λ constant |{Mf > 2λ, Sf ≤ ελ}| ≤ C e^{-c/ε²} |{Mf > λ}|
//! over random Haar polynomials.
use franklin::lab::cww::{verify_cww, CwwConfig};

fn main() -> franklin::Result<()> {
    let rep = verify_cww(&CwwConfig { functions: 100, ..Default::default() }, 3)?;
    for (k, v) in &rep.constants {
        println!("{k:<20} {v:.5}");
    }
    println!("{}", rep.summary_line());
    Ok(())
}

//! Builds the three Franklin variants, checks orthonormality and prints the
//! exponential decay fitted around a few peaks.
use franklin::franklin::{fit_decay, FranklinBasis, Variant};

fn main() -> franklin::Result<()> {
    for variant in [Variant::Classical, Variant::Periodic, Variant::Reconstructed] {
        let basis = FranklinBasis::with_max(variant, 256)?;
        println!("{variant:<13} gram deviation {:.2e}", basis.gram_deviation());
    }

    let basis = FranklinBasis::with_max(Variant::Classical, 256)?;
    for n in [9, 33, 129, 200] {
        if let Some(fit) = fit_decay(&basis, n, None)?.function_fit() {
            println!("f_{n:<4} q = {:.4}  C = {:.3}  node ratio = {:.4}", fit.q, fit.c, fit.node_ratio);
        }
    }
    Ok(())
}

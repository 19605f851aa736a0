//! Block maxima δ_k of a Franklin series with slowly decaying coefficients,
//! against the bound Σ a_j² log j.
use franklin::lab::convergence::{run_convergence, ConvergenceConfig, PolynomialRule};

fn main() -> franklin::Result<()> {
    let cfg = ConvergenceConfig {
        blocks: 8,
        system: PolynomialRule::Rearranged,
        ..Default::default()
    };
    let demo = run_convergence(&cfg, 11)?;
    println!("{:>3} {:>10} {:>10} {:>9} {:>9}", "k", "‖δ_k‖²", "mass", "Σ‖δ‖²", "bound");
    for r in &demo.rows {
        println!("{:>3} {:>10.6} {:>10.6} {:>9.4} {:>9.4}", r.k, r.delta_sq, r.block_mass, r.delta_sum, r.bound_sum);
    }
    Ok(())
}

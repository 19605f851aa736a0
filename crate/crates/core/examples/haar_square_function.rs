//! Shifted Haar partial sums and the square function of a Franklin function.
use franklin::franklin::{franklin_function, Variant};
use franklin::haar::{haar_partial_sum, square_function, HaarExpansion};
use franklin::mesh::Dyadic;
use franklin::pwl::TorusFunction;

fn main() -> franklin::Result<()> {
    let f = franklin_function(11, Variant::Classical)?;
    for xi in ["0", "1/2^3", "3/2^5"] {
        let shift = Dyadic::parse(xi)?;
        let exp = HaarExpansion::new(&f, shift, Some(10))?;
        let s = square_function(&f, shift)?;
        // Parseval for the increments: ‖Sf‖₂² = ‖f − mean‖₂².
        let centered = f.l2_norm().powi(2) - exp.mean().powi(2);
        println!(
            "ξ = {xi:<6} ‖Sf‖₂² = {:.6}  ‖f − Ef‖₂² = {:.6}  resolved = {}",
            s.l2_norm().powi(2),
            centered,
            exp.is_resolved()
        );
        let e4 = haar_partial_sum(&f, 4, shift)?;
        println!("          E_4 f at 1/3: {:.6} (f = {:.6})", e4.evaluate(Dyadic::snap(1.0 / 3.0)), f.evaluate_f64(1.0 / 3.0));
    }
    Ok(())
}

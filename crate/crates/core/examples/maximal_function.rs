//! Exact Hardy–Littlewood maximal function of a piecewise linear function,
//! next to the dyadic maximal function on a shifted grid.
use franklin::franklin::{franklin_function, Variant};
use franklin::maximal::{dyadic_maximal, MaximalEvaluator};
use franklin::mesh::Dyadic;
use franklin::pwl::TorusFunction;

fn main() -> franklin::Result<()> {
    let f = franklin_function(6, Variant::Periodic)?;
    let m = MaximalEvaluator::new(&f);
    let shift = Dyadic::parse("1/2^4")?;
    let d = dyadic_maximal(&f, shift);
    println!("{:>8} {:>10} {:>10} {:>10}", "x", "|f|", "Mf", "M_ξ f");
    for j in 0..16 {
        let x = Dyadic::grid(j, 4);
        println!(
            "{:>8.4} {:>10.5} {:>10.5} {:>10.5}",
            x.to_f64(),
            f.evaluate(x).abs(),
            m.at(x),
            d.lower.evaluate(x)
        );
    }
    Ok(())
}

//! ‖Σ_{block k} |a_n u_n|‖₂ / ‖a‖₂ over random coefficients, k = 1..8.
use franklin::lab::block::{verify_block_bound, BlockConfig};

fn main() -> franklin::Result<()> {
    let rep = verify_block_bound(&BlockConfig::default(), 7)?;
    for (k, v) in &rep.constants {
        println!("{k:<26} {v:.5}");
    }
    println!("{}", rep.summary_line());
    Ok(())
}

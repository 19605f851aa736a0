//! Lower and upper estimates of max_k |g_k| for nested Haar families, n ≤ 256.
use franklin::lab::growth::{run_maximal_bound, GrowthSystem, Mode, SearchConfig};

fn main() -> franklin::Result<()> {
    let cfg = SearchConfig {
        n_values: vec![4, 8, 16, 32, 64, 128, 256],
        ..Default::default()
    };
    let est = run_maximal_bound(GrowthSystem::Haar, Mode::Sng, 2.0, &cfg, 7)?;
    println!("{:>5} {:>8} {:>12} {:>8}", "n", "r_n", "r_n²/log n", "upper");
    for row in &est.rows {
        println!("{:>5} {:>8.4} {:>12.4} {:>8.4}", row.n, row.lower, row.lower_over_log, row.upper_max);
    }
    println!("band ratio {:.3}, monotone {}", est.band_ratio, est.monotone);
    Ok(())
}

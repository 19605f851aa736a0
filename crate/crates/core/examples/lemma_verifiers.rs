//! Runs the randomized lemma checks with small trial counts and prints the
//! conservative constants they measured.
use franklin::lab::lemmas::*;

fn main() -> franklin::Result<()> {
    let cfg = LemmaConfig { trials: 10, ..Default::default() };
    // the majorant's per-cell maxima need ~100 draws before their spread settles
    let majorant = LemmaConfig { trials: 100, ..cfg.clone() };
    let reports = [
        verify_majorant_lemma(&majorant, &MajorantSweep::default(), 1)?,
        verify_monotone_majorant(200, 1.0, 1)?,
        verify_increment_vs_maximal(&cfg, &IncrementSweep::default(), 1)?,
        verify_kernel_integral(&cfg, &[1, 2, 3], 1)?,
        verify_haar_of_delta_u(&cfg, &HaarOfIncrementSweep::default(), 1)?,
    ];
    for rep in &reports {
        println!("{}", rep.summary_line());
        for key in ["C", "C_spread", "max_ratio"] {
            if let Some(c) = rep.get(key) {
                println!("  {key} = {c:.4}");
            }
        }
    }
    Ok(())
}

//! Analytic gradient of the uniformity loss against central finite
//! differences, over a grid of sizes and temperatures.
//!
//!     cargo run --example gradient_check

use contranorm::rng::{gaussian_matrix, seeded};
use contranorm::verify::{gradient_check, GRADIENT_GRID_D, GRADIENT_GRID_N, GRADIENT_GRID_TAU};

fn main() -> contranorm::Result<()> {
    println!("   n   d   tau   max rel. error");
    let mut seed = 0;
    for &n in &GRADIENT_GRID_N {
        for &d in &GRADIENT_GRID_D {
            for &tau in &GRADIENT_GRID_TAU {
                seed += 1;
                let h = gaussian_matrix(&mut seeded(seed), n, d);
                let r = gradient_check(&h, tau)?;
                println!("{n:>4}{d:>4}{tau:>6.1}   {:.3e}{}", r.max_rel_error, if r.passed { "" } else { "  FAIL" });
            }
        }
    }
    Ok(())
}

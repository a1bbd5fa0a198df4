//! Wall-clock of the dual (feature-correlation) update against the
//! token-similarity update as the number of rows grows.
//!
//!     cargo run --release --example dual_scaling

use std::time::Instant;

use contranorm::norms::{contranorm_dual, contranorm_sg, NormalizerConfig, NormVariant};
use contranorm::rng::{gaussian_matrix, seeded};

fn main() -> contranorm::Result<()> {
    let d = 32;
    println!("      n   dual (ms)   stop-gradient (ms)");
    for n in [500, 1_000, 2_000, 4_000, 8_000] {
        let h = gaussian_matrix(&mut seeded(n as u64), n, d);
        let dual = NormalizerConfig::new(NormVariant::ContraNormD).with_scale(1.0);
        let sg = NormalizerConfig::new(NormVariant::ContraNormSg).with_scale(1.0);
        let t = Instant::now();
        contranorm_dual(&h, &dual)?;
        let t_dual = t.elapsed().as_secs_f64() * 1e3;
        let t = Instant::now();
        contranorm_sg(&h, &sg)?;
        let t_sg = t.elapsed().as_secs_f64() * 1e3;
        println!("{n:>7} {t_dual:>11.2} {t_sg:>20.2}");
    }
    Ok(())
}

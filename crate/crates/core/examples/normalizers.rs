//! Applies every normalization variant to the same random batch and prints
//! how each one changes spread and effective rank.
//!
//!     cargo run --example normalizers

use contranorm::metrics::{effective_rank, uniformity_loss, variance};
use contranorm::norms::{apply, NormVariant, NormalizerConfig};
use contranorm::rng::{gaussian_matrix, seeded};

fn main() -> contranorm::Result<()> {
    // Correlated features: a shared direction plus small noise.
    let mut rng = seeded(7);
    let noise = gaussian_matrix(&mut rng, 32, 8).scale(0.3);
    let shared = gaussian_matrix(&mut rng, 1, 8);
    let h = contranorm::Matrix::from_fn(32, 8, |i, j| noise.get(i, j) + shared.get(0, j));

    println!("{:<16} {:>10} {:>8} {:>12}", "variant", "variance", "erank", "uniformity");
    for variant in NormVariant::ALL {
        let cfg = NormalizerConfig::new(variant).with_scale(0.5).with_tau(1.0);
        let out = apply(&h, &cfg)?;
        println!(
            "{:<16} {:>10.4} {:>8.4} {:>12.4}",
            variant.name(),
            variance(&out),
            effective_rank(&out)?,
            uniformity_loss(&out, 1.0)?
        );
    }
    Ok(())
}

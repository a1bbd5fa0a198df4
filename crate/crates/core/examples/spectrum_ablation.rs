//! Singular values at layer 12 of an attention stack for no normalization,
//! the stop-gradient update and the full-gradient update.
//!
//!     cargo run --release --example spectrum_ablation

use contranorm::dynamics::{run, DynamicsConfig};
use contranorm::norms::{NormVariant, NormalizerConfig};
use contranorm::rng::{gaussian_matrix, seeded};

fn main() -> contranorm::Result<()> {
    let h0 = gaussian_matrix(&mut seeded(0), 64, 32);
    for variant in [NormVariant::None, NormVariant::ContraNormSg, NormVariant::ContraNormFull] {
        let cfg = DynamicsConfig {
            depth: 12,
            tau_attn: 32.0,
            norm: NormalizerConfig::new(variant).with_scale(0.4),
            ..DynamicsConfig::default()
        };
        let records = run(&h0, &cfg, None)?;
        let sv = records[12].singular_values.values();
        let tiny = sv.iter().filter(|&&s| s < 0.01 * sv[0]).count();
        let normalized: Vec<String> = sv.iter().step_by(4).map(|s| format!("{:.2e}", s / sv[0])).collect();
        println!("{:<16} {tiny:>2} below 1% of σ₁; σ/σ₁ every 4th: {}", variant.name(), normalized.join(" "));
    }
    Ok(())
}

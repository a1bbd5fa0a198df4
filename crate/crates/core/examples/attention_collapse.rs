//! Effective rank through a 32-layer attention stack (residual + norm after
//! the residual) with LayerNorm versus ContraNorm.
//!
//!     cargo run --release --example attention_collapse [seed]

use contranorm::dynamics::{run, DynamicsConfig, Propagation};
use contranorm::norms::{NormVariant, NormalizerConfig};
use contranorm::rng::{gaussian_matrix, seeded};

fn main() -> contranorm::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let h0 = gaussian_matrix(&mut seeded(seed), 64, 32);
    let stack = |variant| DynamicsConfig {
        propagation: Propagation::Attention,
        depth: 32,
        // LayerNorm rows have squared norm d; this keeps logits cosine-sized.
        tau_attn: 32.0,
        norm: NormalizerConfig::new(variant).with_scale(1.0),
        ..DynamicsConfig::default()
    };
    let ln = run(&h0, &stack(NormVariant::LayerNorm), None)?;
    let cn = run(&h0, &stack(NormVariant::ContraNorm), None)?;
    println!("layer  erank(layernorm)  erank(contranorm)  attn-cos(layernorm)  attn-cos(contranorm)");
    for (a, b) in ln.iter().zip(&cn) {
        println!(
            "{:>5}  {:>16.4}  {:>17.4}  {:>19.4}  {:>20.4}",
            a.layer_index,
            a.effective_rank.unwrap_or(0.0),
            b.effective_rank.unwrap_or(0.0),
            a.attention_similarity.unwrap_or(f64::NAN),
            b.attention_similarity.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

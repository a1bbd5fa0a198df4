//! Collapse diagnostics on three hand-built batches: spread out, collapsed
//! to a line (dimensional collapse), and collapsed to a point (complete
//! collapse).
//!
//!     cargo run --example collapse_metrics

use contranorm::metrics::diagnostics;
use contranorm::rng::{gaussian_matrix, seeded};
use contranorm::Matrix;

fn main() -> contranorm::Result<()> {
    let n = 24;
    let d = 6;
    let mut rng = seeded(1);
    let spread = gaussian_matrix(&mut rng, n, d);
    let coeff = gaussian_matrix(&mut rng, n, 1);
    let line = Matrix::from_fn(n, d, |i, j| coeff.get(i, 0) * (1.0 + j as f64) + 0.01 * spread.get(i, j));
    let point = Matrix::from_fn(n, d, |i, j| 1.0 + 1e-4 * spread.get(i, j));

    for (name, h) in [("spread", spread), ("line", line), ("point", point)] {
        let r = diagnostics(&h, None, 1.0, 0)?;
        println!("{name}:");
        println!("  variance            {:.6e}", r.variance);
        println!("  effective rank      {:.4}", r.effective_rank.unwrap_or(0.0));
        println!("  feature cosine      {:.4}", r.feature_similarity.unwrap_or(f64::NAN));
        println!("  uniformity loss     {:.4}", r.uniformity_loss);
        println!("  decorrelation loss  {:.4}", r.vicreg_exp_loss);
        let sv: Vec<String> = r.singular_values.values().iter().map(|s| format!("{s:.3}")).collect();
        println!("  singular values     [{}]", sv.join(", "));
    }
    Ok(())
}

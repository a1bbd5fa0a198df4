//! Variance of node features through 32 GCN layers on a complete graph
//! and on a two-block stochastic block model, with and without ContraNorm.
//!
//!     cargo run --release --example gcn_oversmoothing

use contranorm::dynamics::{generate_graph, run, DynamicsConfig, GraphKind, NormPosition, Propagation};
use contranorm::norms::{NormVariant, NormalizerConfig};
use contranorm::rng::{gaussian_matrix, seeded};

fn main() -> contranorm::Result<()> {
    let graphs = [
        ("complete", generate_graph(GraphKind::Complete, 16, 0.0, 0.0, 0)?),
        ("sbm", generate_graph(GraphKind::TwoBlockSbm, 16, 0.6, 0.1, 3)?),
    ];
    let h0 = gaussian_matrix(&mut seeded(5), 16, 8);
    let plain = DynamicsConfig {
        propagation: Propagation::GcnSymmetric,
        depth: 32,
        residual: false,
        ..DynamicsConfig::default()
    };
    let contra = DynamicsConfig {
        residual: true,
        norm_position: NormPosition::BeforeResidual,
        norm: NormalizerConfig::new(NormVariant::ContraNorm).with_scale(0.5),
        ..plain.clone()
    };
    for (name, g) in graphs {
        let g = g.with_self_loops();
        let a = run(&h0, &plain, Some(&g))?;
        let b = run(&h0, &contra, Some(&g))?;
        println!("{name} graph, {} edges", g.edge_count());
        println!("  layer   variance (plain)   variance (contranorm)");
        for k in (0..=32).step_by(4) {
            println!("  {k:>5}   {:>16.6e}   {:>21.6e}", a[k].variance, b[k].variance);
        }
    }
    Ok(())
}

//! Randomized checks of the variance bound, the effective-rank increase,
//! the eigenvalue map and the supporting lemmas.
//!
//!     cargo run --release --example verify_propositions [instances]

use contranorm::verify::{self, SuiteOptions};

fn main() -> contranorm::Result<()> {
    let instances = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let opts = SuiteOptions::new(instances, 2024);
    let suites = [
        verify::prop1_suite(&opts)?,
        verify::prop2_suite(&opts)?,
        verify::eigenmap_suite(&opts)?,
        verify::lemma1_suite(&opts)?,
        verify::lemma3_suite(&opts)?,
        verify::diagdom_suite(&opts)?,
    ];
    for s in &suites {
        println!(
            "{:<9} checked {:>6}  skipped {:>6}  counterexamples {}  worst slack {:.3e}",
            s.name,
            s.checked,
            s.skipped,
            s.counterexamples.len(),
            s.worst_slack.unwrap_or(f64::NAN)
        );
    }

    // One instance in detail, including the longer-proof bound.
    let (_, h, s) = verify::prop1_instance(2024, 0);
    let r = verify::check_prop1(&h, s)?;
    println!(
        "\ninstance 0: n={} d={} s={} σ_min={:.4} Var after={:.4} >= {:.4} (alternative bound {:?})",
        r.n,
        r.d,
        r.s,
        r.sigma_min.unwrap_or(f64::NAN),
        r.lhs,
        r.rhs,
        r.appendix_rhs
    );
    Ok(())
}

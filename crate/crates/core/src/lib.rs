//! ContraNorm normalization layers, representation-collapse diagnostics,
//! and a small laboratory for deep propagation dynamics on graphs and
//! attention stacks.
//!
//! * [`numerics`]: dense matrices, softmax, Jacobi eigensolver, singular values
//! * [`norms`]: LayerNorm, PairNorm and the ContraNorm variants
//! * [`metrics`]: variance, effective rank, uniformity and decorrelation losses, similarities
//! * [`dynamics`]: GCN / attention layer stacks and graph inputs
//! * [`verify`]: randomized checks of the variance and effective-rank guarantees
//! * [`cli`]: the `contranorm` command-line front end

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod metrics;
pub mod norms;
pub mod numerics;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};
pub use metrics::LayerDiagnostics;
pub use norms::{NormVariant, NormalizerConfig};
pub use numerics::{Matrix, RepMatrix, Spectrum};

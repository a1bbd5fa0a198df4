use thiserror::Error;

use crate::metrics::LayerDiagnostics;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid matrix shape {rows}x{cols} with {len} entries")]
    InvalidShape { rows: usize, cols: usize, len: usize },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not row-stochastic: {0}")]
    NotStochastic(String),

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A layer produced a non-finite representation. `partial` holds the
    /// diagnostics of every layer before it.
    #[error("representation became non-finite at layer {layer}")]
    Diverged {
        layer: usize,
        partial: Vec<LayerDiagnostics>,
    },
}

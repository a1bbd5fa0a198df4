//! Layer-stacking simulator for graph (GCN-style) and attention-style
//! propagation, with optional residual connections and a normalization
//! layer at a configurable position.

pub mod graph;
pub mod io;

use serde::{Deserialize, Serialize};

pub use graph::{generate_graph, GraphKind, GraphTopology};
pub use io::{check_node_count, load_features, load_graph, parse_edge_list, parse_features};

use crate::error::{Error, Result};
use crate::metrics::{diagnostics, LayerDiagnostics};
use crate::norms::{self, NormalizerConfig};
use crate::numerics::{matmul, softmax_rows, Matrix, RepMatrix};
use crate::rng::{random_orthogonal, seeded};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Propagation {
    GcnSymmetric,
    Attention,
}

/// Which graph operator GCN propagation uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GcnOperatorKind {
    /// `D^{-1/2} Ã D^{-1/2}`
    #[default]
    Symmetric,
    /// `D^{-1} Ã`
    RowNormalized,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormPosition {
    /// `norm(P h) + h`
    BeforeResidual,
    /// `norm(P h + h)`
    #[default]
    AfterResidual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub propagation: Propagation,
    pub depth: usize,
    pub residual: bool,
    pub norm: NormalizerConfig,
    /// Only meaningful with `residual`; both positions coincide otherwise.
    pub norm_position: NormPosition,
    pub tau_attn: f64,
    pub seed: u64,
    pub record_spectrum: bool,
    pub gcn_operator: GcnOperatorKind,
    /// Right-multiply each layer's output by a fixed seeded random
    /// orthogonal `d x d` matrix.
    pub mixing: bool,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            propagation: Propagation::Attention,
            depth: 12,
            residual: true,
            norm: NormalizerConfig::default(),
            norm_position: NormPosition::AfterResidual,
            tau_attn: 1.0,
            seed: 0,
            record_spectrum: false,
            gcn_operator: GcnOperatorKind::Symmetric,
            mixing: false,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::InvalidConfig("depth must be at least 1".into()));
        }
        if !(self.tau_attn.is_finite() && self.tau_attn > 0.0) {
            return Err(Error::InvalidConfig("attention temperature must be positive".into()));
        }
        self.norm.validate(None)
    }
}

fn degrees(adj: &[Vec<f64>]) -> Result<Vec<f64>> {
    adj.iter()
        .enumerate()
        .map(|(i, row)| {
            let d: f64 = row.iter().sum();
            if d > 0.0 {
                Ok(d)
            } else {
                Err(Error::InvalidConfig(format!(
                    "node {i} is isolated; add self-loops before GCN propagation"
                )))
            }
        })
        .collect()
}

/// Symmetrically normalized adjacency `D^{-1/2} Ã D^{-1/2}`, where `Ã`
/// includes `I` if the graph carries self-loop augmentation.
pub fn gcn_operator(g: &GraphTopology) -> Result<Matrix> {
    let adj = g.adjacency();
    let inv_sqrt: Vec<f64> = degrees(&adj)?.into_iter().map(|d| 1.0 / d.sqrt()).collect();
    let n = g.node_count();
    Ok(Matrix::from_fn(n, n, |i, j| inv_sqrt[i] * adj[i][j] * inv_sqrt[j]))
}

/// Random-walk normalized adjacency `D^{-1} Ã` (row-stochastic).
pub fn row_normalized_operator(g: &GraphTopology) -> Result<Matrix> {
    let adj = g.adjacency();
    let deg = degrees(&adj)?;
    let n = g.node_count();
    Ok(Matrix::from_fn(n, n, |i, j| adj[i][j] / deg[i]))
}

/// `softmax_rows(HHᵀ / tau)`: self-attention with identity query and key
/// projections.
pub fn attention_operator(h: &RepMatrix, tau: f64) -> Result<Matrix> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidConfig("attention temperature must be positive".into()));
    }
    Ok(softmax_rows(&h.gram_rows().scale(1.0 / tau)))
}

fn graph_operator(cfg: &DynamicsConfig, g: Option<&GraphTopology>) -> Result<Option<Matrix>> {
    match cfg.propagation {
        Propagation::Attention => Ok(None),
        Propagation::GcnSymmetric => {
            let g = g.ok_or_else(|| {
                Error::InvalidConfig("GCN propagation requires a graph".into())
            })?;
            let op = match cfg.gcn_operator {
                GcnOperatorKind::Symmetric => gcn_operator(g)?,
                GcnOperatorKind::RowNormalized => row_normalized_operator(g)?,
            };
            Ok(Some(op))
        }
    }
}

fn step_inner(
    h: &RepMatrix,
    cfg: &DynamicsConfig,
    graph_op: Option<&Matrix>,
    mixing: Option<&Matrix>,
) -> Result<(RepMatrix, Option<Matrix>)> {
    let attn = match graph_op {
        Some(_) => None,
        None => Some(attention_operator(h, cfg.tau_attn)?),
    };
    let op = graph_op.or(attn.as_ref()).expect("one operator is present");
    let mut propagated = matmul(op, h)?;
    if let Some(w) = mixing {
        propagated = matmul(&propagated, w)?;
    }
    let out = if !cfg.residual {
        norms::apply(&propagated, &cfg.norm)?
    } else {
        match cfg.norm_position {
            NormPosition::BeforeResidual => norms::apply(&propagated, &cfg.norm)?.add(h)?,
            NormPosition::AfterResidual => norms::apply(&propagated.add(h)?, &cfg.norm)?,
        }
    };
    Ok((out, attn))
}

/// One layer: `h' = P h`, then the residual/normalization arrangement of
/// `cfg`. Returns the attention operator when propagation is attention.
/// The per-layer mixing matrix is applied only by [`run`].
pub fn step(
    h: &RepMatrix,
    cfg: &DynamicsConfig,
    g: Option<&GraphTopology>,
) -> Result<(RepMatrix, Option<Matrix>)> {
    cfg.validate()?;
    if let Some(g) = g.filter(|_| cfg.propagation == Propagation::GcnSymmetric) {
        check_node_count(g, h)?;
    }
    let op = graph_operator(cfg, g)?;
    step_inner(h, cfg, op.as_ref(), None)
}

/// Representations and diagnostics of every layer, layer 0 being the input.
#[derive(Clone, Debug)]
pub struct Trace {
    pub states: Vec<RepMatrix>,
    pub diagnostics: Vec<LayerDiagnostics>,
}

/// Runs `cfg.depth` layers and keeps every intermediate representation.
pub fn run_trace(h0: &RepMatrix, cfg: &DynamicsConfig, g: Option<&GraphTopology>) -> Result<Trace> {
    cfg.validate()?;
    if let Some(g) = g.filter(|_| cfg.propagation == Propagation::GcnSymmetric) {
        check_node_count(g, h0)?;
    }
    let graph_op = graph_operator(cfg, g)?;
    let tau = cfg.norm.tau;
    let mut rng = seeded(cfg.seed);
    let mut states = vec![h0.clone()];
    let mut records = vec![diagnostics(h0, None, tau, 0)?];
    for layer in 1..=cfg.depth {
        let mixing = cfg.mixing.then(|| random_orthogonal(&mut rng, h0.cols()));
        let prev = states.last().expect("layer 0 is present");
        let (h, attn) = match step_inner(prev, cfg, graph_op.as_ref(), mixing.as_ref()) {
            Ok(out) => out,
            Err(Error::NonFinite { .. }) => {
                return Err(Error::Diverged {
                    layer,
                    partial: records,
                })
            }
            Err(e) => return Err(e),
        };
        if !h.is_finite() {
            return Err(Error::Diverged {
                layer,
                partial: records,
            });
        }
        let heads = attn.map(|a| vec![a]);
        let record = match diagnostics(&h, heads.as_deref(), tau, layer) {
            Ok(r) => r,
            Err(Error::NonFinite { .. }) => {
                return Err(Error::Diverged {
                    layer,
                    partial: records,
                })
            }
            Err(e) => return Err(e),
        };
        records.push(record);
        states.push(h);
    }
    Ok(Trace {
        states,
        diagnostics: records,
    })
}

/// `cfg.depth + 1` diagnostic records; deterministic in the inputs and seed.
pub fn run(h0: &RepMatrix, cfg: &DynamicsConfig, g: Option<&GraphTopology>) -> Result<Vec<LayerDiagnostics>> {
    run_trace(h0, cfg, g).map(|t| t.diagnostics)
}

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;

/// Undirected graph on nodes `0..node_count`. Edges are stored once, as
/// `(min, max)`; a pair `(u, u)` is an explicit self-loop.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphTopology {
    node_count: usize,
    edges: BTreeSet<(usize, usize)>,
    self_loops_added: bool,
}

impl GraphTopology {
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidConfig("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= node_count || v >= node_count {
                return Err(Error::InvalidConfig(format!(
                    "edge ({u}, {v}) out of range for {node_count} nodes"
                )));
            }
            set.insert((u.min(v), u.max(v)));
        }
        Ok(GraphTopology {
            node_count,
            edges: set,
            self_loops_added: false,
        })
    }

    /// Marks the graph for `A + I` augmentation during propagation.
    pub fn with_self_loops(mut self) -> Self {
        self.self_loops_added = true;
        self
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn self_loops_added(&self) -> bool {
        self.self_loops_added
    }

    pub fn contains_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u.min(v), u.max(v)))
    }

    /// Dense adjacency as nested rows, including the `I` augmentation when
    /// self-loops were added.
    pub fn adjacency(&self) -> Vec<Vec<f64>> {
        let n = self.node_count;
        let mut a = vec![vec![0.0; n]; n];
        for &(u, v) in &self.edges {
            a[u][v] = 1.0;
            a[v][u] = 1.0;
        }
        if self.self_loops_added {
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += 1.0;
            }
        }
        a
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.node_count {
            return Err(Error::DimensionMismatch(format!(
                "relabeling of length {} for {} nodes",
                perm.len(),
                self.node_count
            )));
        }
        let mut g = GraphTopology::new(
            self.node_count,
            self.edges.iter().map(|&(u, v)| (perm[u], perm[v])),
        )?;
        g.self_loops_added = self.self_loops_added;
        Ok(g)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    Ring,
    Complete,
    /// Two equal-size blocks (the first has `n / 2` nodes).
    TwoBlockSbm,
}

/// Synthetic graph. Ring and complete graphs ignore the probabilities and
/// the seed; the stochastic block model draws every pair independently.
pub fn generate_graph(kind: GraphKind, n: usize, p_in: f64, p_out: f64, seed: u64) -> Result<GraphTopology> {
    if n == 0 {
        return Err(Error::InvalidConfig("graph needs at least one node".into()));
    }
    match kind {
        GraphKind::Ring => GraphTopology::new(n, (0..n).map(|i| (i, (i + 1) % n)).filter(|&(u, v)| u != v)),
        GraphKind::Complete => {
            GraphTopology::new(n, (0..n).flat_map(|u| ((u + 1)..n).map(move |v| (u, v))))
        }
        GraphKind::TwoBlockSbm => {
            if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) || p_out > p_in {
                return Err(Error::InvalidConfig(format!(
                    "need 0 <= p_out <= p_in <= 1, got p_in={p_in}, p_out={p_out}"
                )));
            }
            let half = n / 2;
            let mut rng = seeded(seed);
            let mut edges = Vec::new();
            for u in 0..n {
                for v in (u + 1)..n {
                    let p = if (u < half) == (v < half) { p_in } else { p_out };
                    if rng.random_bool(p) {
                        edges.push((u, v));
                    }
                }
            }
            GraphTopology::new(n, edges)
        }
    }
}

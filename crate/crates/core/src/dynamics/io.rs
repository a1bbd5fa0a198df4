//! Text inputs: whitespace-separated edge lists and headerless feature CSV.

use std::fs;
use std::path::Path;

use crate::dynamics::graph::GraphTopology;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RepMatrix};

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parses `u v` per line (0-based ids). Text after `#` is a comment; blank
/// lines are skipped; the node count is the largest id plus one.
pub fn parse_edge_list(text: &str, origin: &str) -> Result<GraphTopology> {
    let mut edges = Vec::new();
    let mut max_id = None::<usize>;
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.to_string(),
            line: k + 1,
            msg,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(err(format!("expected `u v`, found {} fields", fields.len())));
        }
        let mut ids = [0usize; 2];
        for (slot, f) in ids.iter_mut().zip(&fields) {
            *slot = f
                .parse()
                .map_err(|_| err(format!("`{f}` is not a node id")))?;
        }
        max_id = Some(max_id.map_or(ids[0].max(ids[1]), |m: usize| m.max(ids[0]).max(ids[1])));
        edges.push((ids[0], ids[1]));
    }
    let n = max_id.map(|m| m + 1).ok_or_else(|| Error::Parse {
        path: origin.to_string(),
        line: 0,
        msg: "edge list is empty".into(),
    })?;
    GraphTopology::new(n, edges)
}

/// Parses one comma-separated row of floats per node.
pub fn parse_features(text: &str, origin: &str) -> Result<RepMatrix> {
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.to_string(),
            line: k + 1,
            msg,
        };
        let before = data.len();
        for f in line.split(',') {
            let f = f.trim();
            let v: f64 = f.parse().map_err(|_| err(format!("`{f}` is not a number")))?;
            if !v.is_finite() {
                return Err(err(format!("non-finite value `{f}`")));
            }
            data.push(v);
        }
        let w = data.len() - before;
        match width {
            None => width = Some(w),
            Some(expected) if expected != w => {
                return Err(err(format!("row has {w} values, expected {expected}")));
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = width.ok_or_else(|| Error::Parse {
        path: origin.to_string(),
        line: 0,
        msg: "feature file is empty".into(),
    })?;
    Matrix::from_vec(rows, cols, data)
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<GraphTopology> {
    let path = path.as_ref();
    parse_edge_list(&read_text(path)?, &path.display().to_string())
}

pub fn load_features(path: impl AsRef<Path>) -> Result<RepMatrix> {
    let path = path.as_ref();
    parse_features(&read_text(path)?, &path.display().to_string())
}

/// Errors unless the feature matrix has one row per graph node.
pub fn check_node_count(g: &GraphTopology, h: &RepMatrix) -> Result<()> {
    if g.node_count() != h.rows() {
        return Err(Error::DimensionMismatch(format!(
            "graph has {} nodes but features have {} rows",
            g.node_count(),
            h.rows()
        )));
    }
    Ok(())
}

//! Graphs, synthetic motif benchmarks, the TUDataset loader, padding and
//! train/test splitting.

mod batch;
mod generate;
mod io;
mod split;
mod tudataset;

pub use batch::{pad_batch, NodeLayout, PaddedBatch};
pub use generate::{
    attach_motif, build_dataset, generate_ba, generate_er, BaseGraph, Colour, DatasetName, DatasetSpec, Motif,
};
pub use io::{dataset_hash, read_jsonl, write_jsonl, DatasetStats};
pub use split::{split, Split};
pub use tudataset::load_tudataset;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth motif kind recorded by the generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotifKind {
    Grid,
    House,
    Star,
    ColouredHouse,
}

/// Undirected simple graph with node features and a class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    pub n: usize,
    /// Undirected edges as `[i, j]` with `i < j`, sorted and unique.
    pub edges: Vec<[usize; 2]>,
    pub features: Vec<Vec<f64>>,
    pub label: usize,
    /// Per-node motif instance: 0 for base nodes, `k` for nodes of the k-th
    /// attached motif (see `motifs[k - 1]`).
    #[serde(default)]
    pub motif_mask: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub motifs: Vec<MotifKind>,
}

impl Graph {
    /// Builds a graph, symmetrising and de-duplicating `edges`. Self loops and
    /// out-of-range endpoints are rejected.
    pub fn new(n: usize, edges: &[[usize; 2]], features: Vec<Vec<f64>>, label: usize) -> Result<Self> {
        let mut canon = Vec::with_capacity(edges.len());
        for &[a, b] in edges {
            if a >= n || b >= n {
                return Err(Error::Param(format!("edge ({a}, {b}) outside {n} nodes")));
            }
            if a == b {
                return Err(Error::Param(format!("self loop on node {a}")));
            }
            canon.push([a.min(b), a.max(b)]);
        }
        canon.sort_unstable();
        canon.dedup();
        if features.len() != n {
            return Err(Error::Param(format!("{} feature rows for {n} nodes", features.len())));
        }
        let width = features.first().map_or(0, Vec::len);
        if features.iter().any(|r| r.len() != width) {
            return Err(Error::Param("ragged feature matrix".into()));
        }
        Ok(Self {
            n,
            edges: canon,
            features,
            label,
            motif_mask: None,
            motifs: Vec::new(),
        })
    }

    /// Featureless graph: every node carries the constant feature 1.0.
    pub fn unfeatured(n: usize, edges: &[[usize; 2]], label: usize) -> Result<Self> {
        Self::new(n, edges, vec![vec![1.0]; n], label)
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &[a, b] in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for row in &mut adj {
            row.sort_unstable();
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &[a, b] in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    /// Dense `n × n` 0/1 adjacency, row-major.
    pub fn dense_adjacency(&self) -> Vec<f64> {
        let mut a = vec![0.0; self.n * self.n];
        for &[i, j] in &self.edges {
            a[i * self.n + j] = 1.0;
            a[j * self.n + i] = 1.0;
        }
        a
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let adj = self.neighbors();
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    /// Checks the structural invariants: canonical edges in range with no
    /// self loops or duplicates (hence a symmetric, binary, zero-diagonal
    /// adjacency), and one feature row per node.
    pub fn validate(&self) -> Result<()> {
        for w in self.edges.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Param("edges not sorted/unique".into()));
            }
        }
        for &[a, b] in &self.edges {
            if a >= b || b >= self.n {
                return Err(Error::Param(format!("bad edge ({a}, {b})")));
            }
        }
        if self.features.len() != self.n {
            return Err(Error::Param("feature rows != n".into()));
        }
        let width = self.feature_dim();
        if self.features.iter().any(|r| r.len() != width) {
            return Err(Error::Param("ragged feature matrix".into()));
        }
        if let Some(mask) = &self.motif_mask {
            if mask.len() != self.n {
                return Err(Error::Param("motif mask length != n".into()));
            }
            if mask.iter().any(|&m| m as usize > self.motifs.len()) {
                return Err(Error::Param("motif id without a motif kind".into()));
            }
        }
        Ok(())
    }

    /// Node ids belonging to motif instance `id` (1-based).
    pub fn motif_nodes(&self, id: u32) -> Vec<usize> {
        self.motif_mask
            .as_ref()
            .map(|m| (0..self.n).filter(|&i| m[i] == id).collect())
            .unwrap_or_default()
    }

    /// `true` for nodes that belong to any attached motif.
    pub fn in_motif(&self) -> Vec<bool> {
        match &self.motif_mask {
            Some(m) => m.iter().map(|&v| v > 0).collect(),
            None => vec![false; self.n],
        }
    }
}

/// Number of classes in a dataset (max label + 1).
pub fn num_classes(graphs: &[Graph]) -> usize {
    graphs.iter().map(|g| g.label + 1).max().unwrap_or(0)
}

use serde::{Deserialize, Serialize};

use super::{ScnConfig, ScnOutput};
use crate::error::Result;
use crate::graphdata::PaddedBatch;
use crate::ndiff::{Tape, Tensor};

/// Values of one forward pass in padded `B × N` geometry. Padding rows are
/// zero everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScnTrace {
    pub batch_size: usize,
    pub n_pad: usize,
    pub mask: Vec<bool>,
    /// `B × N × s`, before the concept activation.
    pub node_embeddings: Tensor,
    /// `B × N × s`.
    pub node_concepts_graph: Tensor,
    /// `B × N × K`.
    pub assignments: Tensor,
    /// Undirected edges as padded row pairs.
    pub edges: Vec<(usize, usize)>,
    /// `K × E`: weight of every undirected edge in each re-weighted adjacency.
    pub edge_weights: Tensor,
    /// `K × B × N × s_sub`.
    pub node_concepts_subgraph: Tensor,
    /// `B × K × s_sub`.
    pub subgraph_embeddings: Tensor,
    /// `B × K × s_sub`.
    pub subgraph_concepts: Tensor,
    /// `B × K`.
    pub importance: Tensor,
    /// `B × K`.
    pub graph_concept: Tensor,
    /// `B × classes`.
    pub logits: Tensor,
}

impl ScnTrace {
    pub fn collect(tape: &Tape, out: &ScnOutput, batch: &PaddedBatch, cfg: &ScnConfig) -> Result<Self> {
        let (b, n, k) = (batch.batch_size, batch.n_pad, cfg.k);
        let rows = b * n;
        let nodes = &batch.nodes;
        let m = nodes.len();
        let pad = |v: &Tensor, cols: usize| nodes.scatter(v.data(), cols, rows);

        let sub = tape.value(out.subgraph_node_concepts).data();
        let mut sub_padded = Vec::with_capacity(k * rows * cfg.s_sub);
        for kk in 0..k {
            let part = &sub[kk * m * cfg.s_sub..(kk + 1) * m * cfg.s_sub];
            sub_padded.extend(nodes.scatter(part, cfg.s_sub, rows));
        }
        let mut weights = Vec::with_capacity(k * nodes.edges.len());
        for &w in &out.edge_weights {
            // directed edges come in (i→j, j→i) pairs
            weights.extend(tape.value(w).data().iter().step_by(2));
        }

        Ok(Self {
            batch_size: b,
            n_pad: n,
            mask: batch.mask.clone(),
            node_embeddings: Tensor::new(vec![b, n, cfg.s], pad(tape.value(out.node_embeddings), cfg.s))?,
            node_concepts_graph: Tensor::new(vec![b, n, cfg.s], pad(tape.value(out.node_concepts), cfg.s))?,
            assignments: Tensor::new(vec![b, n, k], pad(tape.value(out.assignments), k))?,
            edges: batch.edges.clone(),
            edge_weights: Tensor::new(vec![k, nodes.edges.len()], weights)?,
            node_concepts_subgraph: Tensor::new(vec![k, b, n, cfg.s_sub], sub_padded)?,
            subgraph_embeddings: tape
                .value(out.subgraph_embeddings)
                .clone()
                .reshape(vec![b, k, cfg.s_sub])?,
            subgraph_concepts: tape
                .value(out.subgraph_concepts)
                .clone()
                .reshape(vec![b, k, cfg.s_sub])?,
            importance: tape.value(out.importance).clone(),
            graph_concept: tape.value(out.graph_concept).clone(),
            logits: tape.value(out.logits).clone(),
        })
    }

    pub fn k(&self) -> usize {
        self.edge_weights.shape()[0]
    }

    /// Dense `B × N × N` re-weighted adjacency of cluster `k`.
    pub fn reweighted_adjacency(&self, k: usize) -> Tensor {
        let n = self.n_pad;
        let mut a = vec![0.0; self.batch_size * n * n];
        let e = self.edges.len();
        for (idx, &(i, j)) in self.edges.iter().enumerate() {
            let w = self.edge_weights.data()[k * e + idx];
            let g = i / n;
            let (li, lj) = (i % n, j % n);
            a[g * n * n + li * n + lj] = w;
            a[g * n * n + lj * n + li] = w;
        }
        Tensor::new(vec![self.batch_size, n, n], a).expect("adjacency shape")
    }

    /// Cluster with the largest assignment for each padded row (`None` on
    /// padding).
    pub fn hard_assignments(&self) -> Vec<Option<usize>> {
        let k = self.k();
        (0..self.batch_size * self.n_pad)
            .map(|r| {
                if !self.mask[r] {
                    return None;
                }
                let row = &self.assignments.data()[r * k..(r + 1) * k];
                let mut best = 0;
                for c in 1..k {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                Some(best)
            })
            .collect()
    }
}

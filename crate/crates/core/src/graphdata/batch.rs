use std::rc::Rc;

use super::Graph;
use crate::error::{Error, Result};
use crate::ndiff::Tensor;

/// `B` graphs zero-padded to `N` nodes each.
///
/// Node rows are flattened graph-major: node `i` of graph `b` is row
/// `b * N + i`. Edges are kept sparse; the dense `B×N×N` adjacency is built
/// on demand.
#[derive(Debug, Clone)]
pub struct PaddedBatch {
    pub batch_size: usize,
    pub n_pad: usize,
    pub feature_dim: usize,
    /// `(B·N) × f`; padding rows are zero.
    pub features: Tensor,
    /// `B·N` validity flags.
    pub mask: Vec<bool>,
    pub labels: Vec<usize>,
    pub node_counts: Vec<usize>,
    /// Undirected edges as flattened row pairs `(i, j)`, `i < j`.
    pub edges: Vec<(usize, usize)>,
    /// Both edge directions, for message passing: `src[e] → dst[e]`.
    pub src: Rc<Vec<usize>>,
    pub dst: Rc<Vec<usize>>,
    /// Graph index of every row.
    pub row_graph: Rc<Vec<usize>>,
    /// The same batch without padding rows.
    pub nodes: NodeLayout,
}

/// Real nodes of a batch, numbered consecutively graph by graph.
#[derive(Debug, Clone)]
pub struct NodeLayout {
    /// Padded row of each real node.
    pub rows: Rc<Vec<usize>>,
    /// Graph index of each real node.
    pub graph: Rc<Vec<usize>>,
    /// Undirected edges `(i, j)`, `i < j`, in compact numbering.
    pub edges: Vec<(usize, usize)>,
    pub src: Rc<Vec<usize>>,
    pub dst: Rc<Vec<usize>>,
    pub degree: Vec<usize>,
    pub counts: Vec<usize>,
}

impl NodeLayout {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn num_graphs(&self) -> usize {
        self.counts.len()
    }

    /// Compact index of the first node of every graph.
    pub fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.counts.len());
        let mut acc = 0;
        for &c in &self.counts {
            off.push(acc);
            acc += c;
        }
        off
    }

    /// Expands compact `values` (`len × cols`) to padded `B·N × cols` with
    /// zero padding rows.
    pub fn scatter(&self, values: &[f64], cols: usize, padded_rows: usize) -> Vec<f64> {
        let mut out = vec![0.0; padded_rows * cols];
        for (i, &r) in self.rows.iter().enumerate() {
            out[r * cols..(r + 1) * cols].copy_from_slice(&values[i * cols..(i + 1) * cols]);
        }
        out
    }
}

impl PaddedBatch {
    pub fn rows(&self) -> usize {
        self.batch_size * self.n_pad
    }

    /// Dense `B × N × N` adjacency, row-major.
    pub fn dense_adjacency(&self) -> Vec<f64> {
        let n = self.n_pad;
        let mut a = vec![0.0; self.batch_size * n * n];
        for &(i, j) in &self.edges {
            let b = i / n;
            let (li, lj) = (i % n, j % n);
            a[b * n * n + li * n + lj] = 1.0;
            a[b * n * n + lj * n + li] = 1.0;
        }
        a
    }

    /// Mask as 0/1 values, one per row.
    pub fn mask_values(&self) -> Vec<f64> {
        self.mask.iter().map(|&m| f64::from(u8::from(m))).collect()
    }
}

/// Pads `graphs` to `n_pad` nodes; `None` uses the largest graph size.
pub fn pad_batch(graphs: &[&Graph], n_pad: Option<usize>) -> Result<PaddedBatch> {
    if graphs.is_empty() {
        return Err(Error::Param("empty batch".into()));
    }
    let max_n = graphs.iter().map(|g| g.n).max().unwrap_or(0);
    let n_pad = n_pad.unwrap_or(max_n);
    if n_pad < max_n {
        return Err(Error::Param(format!(
            "padded size {n_pad} smaller than largest graph ({max_n} nodes)"
        )));
    }
    let f = graphs[0].feature_dim();
    if graphs.iter().any(|g| g.feature_dim() != f && g.n > 0) {
        return Err(Error::Param("graphs in a batch must share feature width".into()));
    }
    let b = graphs.len();
    let mut features = vec![0.0; b * n_pad * f];
    let mut mask = vec![false; b * n_pad];
    let mut edges = Vec::new();
    let mut src = Vec::new();
    let mut dst = Vec::new();
    let mut rows = Vec::new();
    let mut node_graph = Vec::new();
    let mut cedges = Vec::new();
    let mut csrc = Vec::new();
    let mut cdst = Vec::new();
    let mut degree = Vec::new();
    for (gi, g) in graphs.iter().enumerate() {
        let base = gi * n_pad;
        let cbase = rows.len();
        rows.extend(base..base + g.n);
        node_graph.extend(std::iter::repeat_n(gi, g.n));
        degree.extend(g.degrees());
        for &[i, j] in &g.edges {
            cedges.push((cbase + i, cbase + j));
            csrc.extend([cbase + i, cbase + j]);
            cdst.extend([cbase + j, cbase + i]);
        }
        for (i, row) in g.features.iter().enumerate() {
            features[(base + i) * f..(base + i + 1) * f].copy_from_slice(row);
            mask[base + i] = true;
        }
        for &[i, j] in &g.edges {
            edges.push((base + i, base + j));
            src.push(base + i);
            dst.push(base + j);
            src.push(base + j);
            dst.push(base + i);
        }
    }
    Ok(PaddedBatch {
        batch_size: b,
        n_pad,
        feature_dim: f,
        features: Tensor::new(vec![b * n_pad, f], features)?,
        mask,
        labels: graphs.iter().map(|g| g.label).collect(),
        node_counts: graphs.iter().map(|g| g.n).collect(),
        edges,
        src: Rc::new(src),
        dst: Rc::new(dst),
        row_graph: Rc::new((0..b * n_pad).map(|r| r / n_pad).collect()),
        nodes: NodeLayout {
            rows: Rc::new(rows),
            graph: Rc::new(node_graph),
            edges: cedges,
            src: Rc::new(csrc),
            dst: Rc::new(cdst),
            degree,
            counts: graphs.iter().map(|g| g.n).collect(),
        },
    })
}

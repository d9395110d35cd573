//! Accuracy, decision-tree concept completeness, subgraph extraction scores
//! and confidence intervals over seeds.

mod completeness;
mod scores;
mod tree;

use serde::{Deserialize, Serialize};

pub use completeness::{
    concept_completeness, graph_completeness, node_completeness, percent_correct, subgraph_completeness, ConceptLevel,
    ConceptTable, GraphConcepts, SubgraphMode,
};
pub use scores::{
    argmax, assignment_strength, cluster_utilisation, concept_code, conditional_strength, subgraph_consistency,
    ClusterScores, BINARIZE_THRESHOLD,
};
pub use tree::{majority, DecisionTree, TreeNode, TreeParams};

use crate::error::{Error, Result};
use crate::ndiff::Tensor;

/// Percentage of rows whose argmax (lowest index on ties) equals the label.
pub fn accuracy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let (rows, _) = logits.rows_cols();
    if rows != labels.len() {
        return Err(Error::shape("accuracy", &[rows], &[labels.len()]));
    }
    let pred: Vec<usize> = (0..rows).map(|r| argmax(logits.row(r))).collect();
    percent_correct(&pred, labels)
}

/// Mean with a 95% normal interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

impl Interval {
    /// Zero-width interval around one value.
    pub fn point(v: f64) -> Self {
        Self {
            mean: v,
            low: v,
            high: v,
        }
    }

    /// `mean (low, high)` with two decimals.
    pub fn cell(&self) -> String {
        format!("{:.2} ({:.2}, {:.2})", self.mean, self.low, self.high)
    }
}

/// `mean ± 1.96·sd/√n` with the sample standard deviation, clipped to
/// `range`.
pub fn ci95(values: &[f64], range: (f64, f64)) -> Result<Interval> {
    if values.len() < 2 {
        return Err(Error::Contract(format!(
            "confidence interval needs at least 2 values, got {}",
            values.len()
        )));
    }
    if values.iter().all(|&v| v == values[0]) {
        return Ok(Interval::point(values[0]));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let half = 1.96 * var.sqrt() / n.sqrt();
    Ok(Interval {
        mean,
        low: (mean - half).max(range.0),
        high: (mean + half).min(range.1),
    })
}

/// [`ci95`], or a point interval for a single value.
pub fn summarize(values: &[f64], range: (f64, f64)) -> Result<Interval> {
    match values {
        [] => Err(Error::Contract("no values to summarize".into())),
        [v] => Ok(Interval::point(*v)),
        _ => ci95(values, range),
    }
}

#[cfg(test)]
mod tests;

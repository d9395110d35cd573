use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Encodings at or above this value read as an active concept slot.
pub const BINARIZE_THRESHOLD: f64 = 0.5;

/// Slack on the `c ≥ 1/K` membership test so that an exactly uniform row
/// rounded below `1/K` still counts.
const MEMBER_SLACK: f64 = 1e-12;

/// Binarized concept code, one `'0'`/`'1'` per slot.
pub fn concept_code(encoding: &[f64]) -> String {
    encoding
        .iter()
        .map(|&v| if v >= BINARIZE_THRESHOLD { '1' } else { '0' })
        .collect()
}

/// First index of the row maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn check_rows(rows: &[Vec<f64>]) -> Result<usize> {
    let k = rows
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Contract("no nodes to score".into()))?;
    if k == 0 {
        return Err(Error::Contract("assignment rows are empty".into()));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != k) {
        return Err(Error::shape("cluster_scores", &[k], &[r.len()]));
    }
    Ok(k)
}

/// Mean over nodes of the largest cluster probability.
pub fn assignment_strength(rows: &[Vec<f64>]) -> Result<f64> {
    check_rows(rows)?;
    let total: f64 = rows
        .iter()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum();
    Ok(total / rows.len() as f64)
}

/// Per cluster, the mean membership over nodes with `c_ik ≥ 1/K`; clusters
/// without such nodes score 0.
pub fn conditional_strength(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = check_rows(rows)?;
    let floor = 1.0 / k as f64 - MEMBER_SLACK;
    Ok((0..k)
        .map(|j| {
            let members: Vec<f64> = rows.iter().map(|r| r[j]).filter(|&v| v >= floor).collect();
            if members.is_empty() {
                0.0
            } else {
                members.iter().sum::<f64>() / members.len() as f64
            }
        })
        .collect())
}

/// Mean of the conditional strengths.
pub fn cluster_utilisation(conditional: &[f64]) -> f64 {
    if conditional.is_empty() {
        0.0
    } else {
        conditional.iter().sum::<f64>() / conditional.len() as f64
    }
}

/// Fraction of nodes whose argmax cluster is the modal cluster of their
/// concept code (mode ties go to the lowest cluster).
pub fn subgraph_consistency(codes: &[String], clusters: &[usize]) -> Result<f64> {
    if codes.is_empty() {
        return Err(Error::Contract("no nodes to score".into()));
    }
    if codes.len() != clusters.len() {
        return Err(Error::shape("subgraph_consistency", &[codes.len()], &[clusters.len()]));
    }
    let mut counts: BTreeMap<&str, BTreeMap<usize, usize>> = BTreeMap::new();
    for (code, &c) in codes.iter().zip(clusters) {
        *counts.entry(code).or_default().entry(c).or_default() += 1;
    }
    let agree: usize = counts
        .values()
        .map(|per| {
            // BTreeMap iterates clusters ascending, so the first maximum wins
            per.values().fold(0, |m, &n| m.max(n))
        })
        .sum();
    Ok(agree as f64 / codes.len() as f64)
}

/// The three subgraph-extraction scores over one evaluation slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterScores {
    pub assignment_strength: f64,
    pub conditional_strength: Vec<f64>,
    pub utilisation: f64,
    pub consistency: f64,
}

impl ClusterScores {
    /// `assignments` and `concepts` are aligned per node.
    pub fn compute(assignments: &[Vec<f64>], concepts: &[Vec<f64>]) -> Result<Self> {
        if assignments.len() != concepts.len() {
            return Err(Error::shape("cluster_scores", &[assignments.len()], &[concepts.len()]));
        }
        let conditional = conditional_strength(assignments)?;
        let codes: Vec<String> = concepts.iter().map(|c| concept_code(c)).collect();
        let clusters: Vec<usize> = assignments.iter().map(|r| argmax(r)).collect();
        Ok(Self {
            assignment_strength: assignment_strength(assignments)?,
            utilisation: cluster_utilisation(&conditional),
            conditional_strength: conditional,
            consistency: subgraph_consistency(&codes, &clusters)?,
        })
    }
}

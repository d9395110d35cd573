//! The SCN training objective. Every custom term is normalised to `[0, 1]`
//! and computed over real nodes only.

use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphdata::NodeLayout;
use crate::ndiff::{Tape, Tensor, Var};
use crate::scn::ScnOutput;

const LOG_EPS: f64 = 1e-12;
const DIST_EPS: f64 = 1e-12;
const WEIGHT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub entropy: f64,
    pub connectivity: f64,
    pub utilisation: f64,
    pub consistency: f64,
    pub alpha_pos: f64,
    pub alpha_neg: f64,
    pub alpha_iso: f64,
    pub margin: f64,
    pub tau: f64,
    pub gamma: f64,
    pub max_pairs: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            entropy: 0.1,
            connectivity: 0.1,
            utilisation: 0.1,
            consistency: 0.1,
            alpha_pos: 1.0,
            alpha_neg: 0.5,
            alpha_iso: 2.0,
            margin: 0.5,
            tau: 0.5,
            gamma: 4.0,
            max_pairs: 4096,
        }
    }
}

impl LossWeights {
    /// Cross-entropy only.
    pub fn none() -> Self {
        Self {
            entropy: 0.0,
            connectivity: 0.0,
            utilisation: 0.0,
            consistency: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.entropy,
            self.connectivity,
            self.utilisation,
            self.consistency,
            self.alpha_pos,
            self.alpha_neg,
            self.alpha_iso,
        ];
        if all.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::Config("loss weights must be finite and nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.margin) || self.margin == 0.0 {
            return Err(Error::Config(format!("margin must be in (0, 1], got {}", self.margin)));
        }
        if self.tau.is_nan() || self.tau <= 0.0 {
            return Err(Error::Config("isolation threshold must be positive".into()));
        }
        if self.gamma.is_nan() || self.gamma < 1.0 {
            return Err(Error::Config("consistency sharpening must be >= 1".into()));
        }
        if self.connectivity > 0.0 && self.alpha_pos + self.alpha_neg + self.alpha_iso == 0.0 {
            return Err(Error::Contract("all connectivity sub-weights are zero".into()));
        }
        Ok(())
    }
}

/// Scalar values of every loss term for one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub cross_entropy: f64,
    pub entropy: f64,
    pub connectivity: f64,
    pub pos: f64,
    pub neg: f64,
    pub iso: f64,
    pub utilisation: f64,
    pub consistency: f64,
}

impl LossBreakdown {
    pub const CSV_HEADER: &'static str = "epoch,total,ce,entropy,connectivity,pos,neg,iso,utilisation,consistency";

    pub fn csv_row(&self, epoch: usize) -> String {
        format!(
            "{epoch},{},{},{},{},{},{},{},{},{}",
            self.total,
            self.cross_entropy,
            self.entropy,
            self.connectivity,
            self.pos,
            self.neg,
            self.iso,
            self.utilisation,
            self.consistency
        )
    }

    /// Entry-wise running sum, for epoch averages.
    pub fn accumulate(&mut self, other: &LossBreakdown, weight: f64) {
        self.total += weight * other.total;
        self.cross_entropy += weight * other.cross_entropy;
        self.entropy += weight * other.entropy;
        self.connectivity += weight * other.connectivity;
        self.pos += weight * other.pos;
        self.neg += weight * other.neg;
        self.iso += weight * other.iso;
        self.utilisation += weight * other.utilisation;
        self.consistency += weight * other.consistency;
    }
}

/// Tape handles of every term.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub cross_entropy: Var,
    pub entropy: Var,
    pub connectivity: Var,
    pub pos: Var,
    pub neg: Var,
    pub iso: Var,
    pub utilisation: Var,
    pub consistency: Var,
}

impl LossTerms {
    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        let v = |x: Var| tape.value(x).item();
        LossBreakdown {
            total: v(self.total),
            cross_entropy: v(self.cross_entropy),
            entropy: v(self.entropy),
            connectivity: v(self.connectivity),
            pos: v(self.pos),
            neg: v(self.neg),
            iso: v(self.iso),
            utilisation: v(self.utilisation),
            consistency: v(self.consistency),
        }
    }
}

fn zero(tape: &mut Tape) -> Var {
    tape.leaf(Tensor::scalar(0.0))
}

/// Mean negative log-likelihood of `labels` under `softmax(logits)`.
pub fn cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    let classes = tape.value(logits).rows_cols().1;
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Contract(format!("label {bad} with {classes} classes")));
    }
    let lp = tape.log_softmax(logits);
    let picked = tape.pick(lp, labels)?;
    let m = tape.mean(picked);
    Ok(tape.neg(m))
}

/// Row-wise `Σ_k p ln p`, shape `rows × 1`.
fn neg_entropy_rows(tape: &mut Tape, p: Var) -> Result<Var> {
    let lp = tape.log(p, LOG_EPS);
    let plp = tape.mul(p, lp)?;
    tape.sum_axis(plp, 1)
}

/// Mean normalised assignment entropy over nodes.
pub fn entropy_loss(tape: &mut Tape, assignments: Var) -> Result<Var> {
    let (rows, k) = tape.value(assignments).rows_cols();
    if rows == 0 || k < 2 {
        return Ok(zero(tape));
    }
    let ne = neg_entropy_rows(tape, assignments)?;
    let m = tape.mean(ne);
    Ok(tape.scale(m, -1.0 / (k as f64).ln()))
}

fn index_lists(pairs: &[(usize, usize)]) -> (Rc<Vec<usize>>, Rc<Vec<usize>>) {
    (
        Rc::new(pairs.iter().map(|p| p.0).collect()),
        Rc::new(pairs.iter().map(|p| p.1).collect()),
    )
}

/// `c_i · c_j` for every listed pair, shape `pairs × 1`.
fn pair_similarity(tape: &mut Tape, c: Var, pairs: &[(usize, usize)]) -> Result<Var> {
    let (a, b) = index_lists(pairs);
    let ca = tape.gather_rows(c, a)?;
    let cb = tape.gather_rows(c, b)?;
    let prod = tape.mul(ca, cb)?;
    tape.sum_axis(prod, 1)
}

/// Hinge on edge similarities: mean of `max(0, m − c_i·c_j)/m`.
pub fn pos_sim_penalty(tape: &mut Tape, c: Var, nodes: &NodeLayout, margin: f64) -> Result<Var> {
    if nodes.edges.is_empty() {
        return Ok(zero(tape));
    }
    let sim = pair_similarity(tape, c, &nodes.edges)?;
    let gap = tape.affine(sim, -1.0, margin);
    let hinge = tape.relu(gap);
    let m = tape.mean(hinge);
    Ok(tape.scale(m, 1.0 / margin))
}

/// Mean `c_i·c_j` over distinct non-adjacent pairs within each graph.
pub fn neg_sim_penalty(tape: &mut Tape, c: Var, nodes: &NodeLayout) -> Result<Var> {
    let pairs: usize = nodes.counts.iter().map(|&n| n * n.saturating_sub(1) / 2).sum();
    let non_edges = pairs - nodes.edges.len();
    if non_edges == 0 {
        return Ok(zero(tape));
    }
    // Σ_{i<j in g} c_i·c_j = (|Σ_i c_i|² − Σ_i |c_i|²) / 2
    let totals = tape.segment_sum(c, nodes.graph.clone(), nodes.num_graphs())?;
    let sq_totals = tape.mul(totals, totals)?;
    let all_pairs = tape.sum(sq_totals);
    let cc = tape.mul(c, c)?;
    let self_pairs = tape.sum(cc);
    let diff = tape.sub(all_pairs, self_pairs)?;
    let within = tape.scale(diff, 0.5);
    let within = if nodes.edges.is_empty() {
        within
    } else {
        let sim = pair_similarity(tape, c, &nodes.edges)?;
        let edge_total = tape.sum(sim);
        tape.sub(within, edge_total)?
    };
    Ok(tape.scale(within, 1.0 / non_edges as f64))
}

/// Mean of `max(0, τ − v_i)/τ` with `v_i = Σ_{j∈N(i)} c_i·c_j`, over nodes
/// that have at least one neighbour.
pub fn isolation_penalty(tape: &mut Tape, c: Var, nodes: &NodeLayout, tau: f64) -> Result<Var> {
    let connected: Vec<usize> = (0..nodes.len()).filter(|&i| nodes.degree[i] > 0).collect();
    if connected.is_empty() {
        return Ok(zero(tape));
    }
    let agg = tape.edge_aggregate(c, None, nodes.src.clone(), nodes.dst.clone())?;
    let prod = tape.mul(c, agg)?;
    let v = tape.sum_axis(prod, 1)?;
    let v = tape.gather_rows(v, Rc::new(connected))?;
    let gap = tape.affine(v, -1.0, tau);
    let hinge = tape.relu(gap);
    let m = tape.mean(hinge);
    Ok(tape.scale(m, 1.0 / tau))
}

/// Weighted average of the three connectivity penalties; returns
/// `(loss, pos, neg, iso)`.
pub fn connectivity_loss(tape: &mut Tape, c: Var, nodes: &NodeLayout, w: &LossWeights) -> Result<(Var, Var, Var, Var)> {
    let total = w.alpha_pos + w.alpha_neg + w.alpha_iso;
    if total <= 0.0 {
        return Err(Error::Contract("all connectivity sub-weights are zero".into()));
    }
    let pos = pos_sim_penalty(tape, c, nodes, w.margin)?;
    let neg = neg_sim_penalty(tape, c, nodes)?;
    let iso = isolation_penalty(tape, c, nodes, w.tau)?;
    let a = tape.scale(pos, w.alpha_pos / total);
    let b = tape.scale(neg, w.alpha_neg / total);
    let d = tape.scale(iso, w.alpha_iso / total);
    let ab = tape.add(a, b)?;
    Ok((tape.add(ab, d)?, pos, neg, iso))
}

/// `1 − H(u)/ln K` for the batch-wide mean assignment `u`.
pub fn utilisation_loss(tape: &mut Tape, c: Var) -> Result<Var> {
    let (rows, k) = tape.value(c).rows_cols();
    if rows == 0 || k < 2 {
        return Ok(zero(tape));
    }
    let u = tape.mean_axis(c, 0)?;
    let ne = neg_entropy_rows(tape, u)?;
    let ne = tape.sum(ne);
    Ok(tape.affine(ne, 1.0 / (k as f64).ln(), 1.0))
}

/// Unordered node pairs for the consistency term: all pairs when there are
/// at most `cap`, otherwise `cap` uniformly drawn distinct-node pairs.
pub fn sample_pairs<R: Rng>(nodes: usize, cap: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let total = nodes * nodes.saturating_sub(1) / 2;
    if total <= cap {
        let mut out = Vec::with_capacity(total);
        for i in 0..nodes {
            for j in i + 1..nodes {
                out.push((i, j));
            }
        }
        return out;
    }
    (0..cap)
        .map(|_| {
            let i = rng.gen_range(0..nodes);
            let mut j = rng.gen_range(0..nodes - 1);
            if j >= i {
                j += 1;
            }
            (i.min(j), i.max(j))
        })
        .collect()
}

/// `Σ w·d / (Σ w + ε)` with `w = ((cos(h_i, h_j) + 1)/2)^γ` and
/// `d = ‖c_i − c_j‖/√2`.
pub fn consistency_loss(tape: &mut Tape, embeddings: Var, c: Var, pairs: &[(usize, usize)], gamma: f64) -> Result<Var> {
    if pairs.is_empty() {
        return Ok(zero(tape));
    }
    let (a, b) = index_lists(pairs);
    let ea = tape.gather_rows(embeddings, a.clone())?;
    let eb = tape.gather_rows(embeddings, b.clone())?;
    let dot = tape.mul(ea, eb)?;
    let dot = tape.sum_axis(dot, 1)?;
    let na = tape.mul(ea, ea)?;
    let na = tape.sum_axis(na, 1)?;
    let nb = tape.mul(eb, eb)?;
    let nb = tape.sum_axis(nb, 1)?;
    let norms = tape.mul(na, nb)?;
    let norms = tape.sqrt(norms);
    let cos = tape.div(dot, norms, WEIGHT_EPS)?;
    let w = tape.affine(cos, 0.5, 0.5);
    let w = tape.relu(w);
    let w = tape.pow(w, gamma);

    let ca = tape.gather_rows(c, a)?;
    let cb = tape.gather_rows(c, b)?;
    let diff = tape.sub(ca, cb)?;
    let sq = tape.mul(diff, diff)?;
    let sq = tape.sum_axis(sq, 1)?;
    let sq = tape.affine(sq, 0.5, DIST_EPS);
    let d = tape.sqrt(sq);

    let wd = tape.mul(w, d)?;
    let num = tape.sum(wd);
    let den = tape.sum(w);
    tape.div(num, den, WEIGHT_EPS)
}

/// Full SCN objective on a training-mode forward pass.
pub fn scn_loss<R: Rng>(
    tape: &mut Tape,
    out: &ScnOutput,
    nodes: &NodeLayout,
    labels: &[usize],
    w: &LossWeights,
    rng: &mut R,
) -> Result<LossTerms> {
    let c = out.assignments;
    let ce = cross_entropy(tape, out.logits, labels)?;
    let entropy = entropy_loss(tape, c)?;
    let (connectivity, pos, neg, iso) = connectivity_loss(tape, c, nodes, w)?;
    let utilisation = utilisation_loss(tape, c)?;
    let pairs = sample_pairs(nodes.len(), w.max_pairs, rng);
    let consistency = consistency_loss(tape, out.node_embeddings, c, &pairs, w.gamma)?;

    let mut total = ce;
    for (lambda, term) in [
        (w.entropy, entropy),
        (w.connectivity, connectivity),
        (w.utilisation, utilisation),
        (w.consistency, consistency),
    ] {
        if lambda != 0.0 {
            let scaled = tape.scale(term, lambda);
            total = tape.add(total, scaled)?;
        }
    }
    Ok(LossTerms {
        total,
        cross_entropy: ce,
        entropy,
        connectivity,
        pos,
        neg,
        iso,
        utilisation,
        consistency,
    })
}

#[cfg(test)]
mod tests;

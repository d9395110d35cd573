//! Concept graph network baselines: mean pooling, or one DiffPool layer
//! followed by mean pooling over the coarse nodes.

use std::fs;
use std::path::Path;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphdata::{NodeLayout, PaddedBatch};
use crate::losses::{cross_entropy, entropy_loss};
use crate::ndiff::{ParamStore, Tape, Tensor, Var};
use crate::scn::{argmax_rows, compact_features, load_values, unit_edges, ConvLayer, ConvStack, Linear};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CgnVariant {
    MeanPool,
    DiffPool,
}

impl CgnVariant {
    pub fn tag(self) -> &'static str {
        match self {
            CgnVariant::MeanPool => "cgn_mean",
            CgnVariant::DiffPool => "cgn_diffpool",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgnConfig {
    pub variant: CgnVariant,
    pub layers: usize,
    pub hidden: usize,
    pub s: usize,
    /// Coarse clusters (DiffPool only).
    pub k: usize,
    pub features: usize,
    pub classes: usize,
    #[serde(default = "default_aux")]
    pub link_weight: f64,
    #[serde(default = "default_aux")]
    pub entropy_weight: f64,
}

fn default_aux() -> f64 {
    0.1
}

impl CgnConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("s", self.s),
            ("features", self.features),
            ("classes", self.classes),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.variant == CgnVariant::DiffPool && self.k == 0 {
            return Err(Error::Config("DiffPool needs at least one cluster".into()));
        }
        if !(self.link_weight >= 0.0 && self.entropy_weight >= 0.0) {
            return Err(Error::Config("auxiliary loss weights must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffPoolParams {
    pub assign: ConvLayer,
    pub embed: ConvLayer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgnParams {
    pub initial: ConvStack,
    pub diffpool: Option<DiffPoolParams>,
    pub readout: Linear,
}

impl CgnParams {
    pub fn register(cfg: &CgnConfig, store: &mut ParamStore, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = &mut rng;
        let initial = ConvStack::register(store, "initial", cfg.layers, cfg.features, cfg.hidden, cfg.s, r);
        let diffpool = (cfg.variant == CgnVariant::DiffPool).then(|| DiffPoolParams {
            assign: ConvLayer::register(store, "diffpool.assign", cfg.s, cfg.k, r),
            embed: ConvLayer::register(store, "diffpool.embed", cfg.s, cfg.s, r),
        });
        let readout = Linear::register(store, "readout", cfg.s, cfg.classes, r);
        Self {
            initial,
            diffpool,
            readout,
        }
    }
}

/// Output of one DiffPool layer.
#[derive(Debug, Clone, Copy)]
pub struct DiffPoolOutput {
    /// `M × K` soft assignment.
    pub assignment: Var,
    /// `(B·K) × d` coarse node embeddings.
    pub coarse_h: Var,
    /// `B × K × K` coarse adjacency.
    pub coarse_adjacency: Var,
    /// `‖A − S Sᵀ‖²_F / n²`, averaged over graphs.
    pub link_loss: Var,
    pub entropy_loss: Var,
}

/// Tape handles of a CGN forward pass.
#[derive(Debug, Clone, Copy)]
pub struct CgnOutput {
    pub node_embeddings: Var,
    /// `M × s`.
    pub node_concepts: Var,
    pub diffpool: Option<DiffPoolOutput>,
    /// `(B·K) × s` coarse-node concepts (DiffPool only).
    pub subgraph_concepts: Option<Var>,
    /// `B × s`.
    pub graph_concept: Var,
    pub logits: Var,
}

/// Lays compact rows out as `B × n × d` with zero padding rows.
fn to_padded(tape: &mut Tape, x: Var, nodes: &NodeLayout, n: usize) -> Result<Var> {
    let (m, d) = tape.value(x).rows_cols();
    let zero = tape.leaf(Tensor::zeros(&[1, d]));
    let ext = tape.concat(&[x, zero], 0)?;
    let b = nodes.num_graphs();
    let mut idx = vec![m; b * n];
    for (g, &off) in nodes.offsets().iter().enumerate() {
        for i in 0..nodes.counts[g] {
            idx[g * n + i] = off + i;
        }
    }
    let padded = tape.gather_rows(ext, Rc::new(idx))?;
    tape.reshape(padded, &[b, n, d])
}

/// Segment mean of compact rows per graph, `B × d`.
fn graph_mean(tape: &mut Tape, x: Var, nodes: &NodeLayout) -> Result<Var> {
    let sums = tape.segment_sum(x, nodes.graph.clone(), nodes.num_graphs())?;
    let counts: Vec<f64> = nodes.counts.iter().map(|&c| c as f64).collect();
    let counts = tape.leaf(Tensor::new(vec![counts.len(), 1], counts)?);
    tape.div(sums, counts, 1e-12)
}

/// Pools with a given assignment `s` (`M × K`) and embedding `z` (`M × d`).
pub fn diffpool_pool(tape: &mut Tape, s: Var, z: Var, nodes: &NodeLayout) -> Result<(Var, Var)> {
    let k = tape.value(s).rows_cols().1;
    let d = tape.value(z).rows_cols().1;
    let n = nodes.counts.iter().copied().max().unwrap_or(0);
    let b = nodes.num_graphs();
    let sp = to_padded(tape, s, nodes, n)?;
    let zp = to_padded(tape, z, nodes, n)?;
    let coarse_h = tape.bmm(sp, zp, true)?;
    let coarse_h = tape.reshape(coarse_h, &[b * k, d])?;
    let a_s = tape.edge_aggregate(s, None, nodes.src.clone(), nodes.dst.clone())?;
    let a_sp = to_padded(tape, a_s, nodes, n)?;
    let coarse_a = tape.bmm(sp, a_sp, true)?;
    Ok((coarse_h, coarse_a))
}

/// Per-graph `‖A − S Sᵀ‖²_F / n²`, averaged over the batch; expanded as
/// `2|E| − 2 Σ_{(i,j)∈A} s_i·s_j + ‖SᵀS‖²_F`.
pub fn link_prediction_loss(tape: &mut Tape, s: Var, nodes: &NodeLayout) -> Result<Var> {
    let k = tape.value(s).rows_cols().1;
    let b = nodes.num_graphs();
    let n = nodes.counts.iter().copied().max().unwrap_or(0);
    let sp = to_padded(tape, s, nodes, n)?;
    let sts = tape.bmm(sp, sp, true)?;
    let sts = tape.reshape(sts, &[b, k * k])?;
    let sq = tape.mul(sts, sts)?;
    let gram = tape.sum_axis(sq, 1)?;

    let mut edge_count = vec![0.0; b];
    for &(i, _) in &nodes.edges {
        edge_count[nodes.graph[i]] += 2.0;
    }
    let mut total = tape.leaf(Tensor::new(vec![b, 1], edge_count)?);
    total = tape.add(total, gram)?;
    if !nodes.edges.is_empty() {
        let si = tape.gather_rows(s, nodes.src.clone())?;
        let sj = tape.gather_rows(s, nodes.dst.clone())?;
        let prod = tape.mul(si, sj)?;
        let sims = tape.sum_axis(prod, 1)?;
        let seg = Rc::new(nodes.src.iter().map(|&i| nodes.graph[i]).collect());
        let per_graph = tape.segment_sum(sims, seg, b)?;
        let twice = tape.scale(per_graph, 2.0);
        total = tape.sub(total, twice)?;
    }
    let n2: Vec<f64> = nodes.counts.iter().map(|&c| (c * c).max(1) as f64).collect();
    let n2 = tape.leaf(Tensor::new(vec![b, 1], n2)?);
    let per = tape.div(total, n2, 0.0)?;
    Ok(tape.mean(per))
}

impl CgnParams {
    pub fn diffpool_layer(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: Var,
        nodes: &NodeLayout,
    ) -> Result<DiffPoolOutput> {
        let dp = self
            .diffpool
            .as_ref()
            .ok_or_else(|| Error::Contract("mean-pool CGN has no DiffPool layer".into()))?;
        let edges = unit_edges(nodes);
        let logits = dp.assign.forward(tape, store, h, &edges, false)?;
        let s = tape.softmax(logits, None)?;
        let z = dp.embed.forward(tape, store, h, &edges, false)?;
        let (coarse_h, coarse_adjacency) = diffpool_pool(tape, s, z, nodes)?;
        let link_loss = link_prediction_loss(tape, s, nodes)?;
        let entropy_loss = entropy_loss(tape, s)?;
        Ok(DiffPoolOutput {
            assignment: s,
            coarse_h,
            coarse_adjacency,
            link_loss,
            entropy_loss,
        })
    }

    pub fn forward(
        &self,
        cfg: &CgnConfig,
        store: &ParamStore,
        tape: &mut Tape,
        batch: &PaddedBatch,
    ) -> Result<CgnOutput> {
        if batch.feature_dim != cfg.features {
            return Err(Error::shape("cgn_forward", &[cfg.features], &[batch.feature_dim]));
        }
        if batch.nodes.is_empty() {
            return Err(Error::Param("batch has no nodes".into()));
        }
        let nodes = &batch.nodes;
        let x = compact_features(tape, batch)?;
        let node_embeddings = self.initial.forward(tape, store, x, &unit_edges(nodes))?;
        let node_concepts = tape.normalized_softmax(node_embeddings, None)?;
        let (pooled, diffpool, subgraph_concepts) = match cfg.variant {
            CgnVariant::MeanPool => (graph_mean(tape, node_concepts, nodes)?, None, None),
            CgnVariant::DiffPool => {
                let dp = self.diffpool_layer(tape, store, node_concepts, nodes)?;
                let coarse = tape.normalized_softmax(dp.coarse_h, None)?;
                let seg = Rc::new((0..nodes.num_graphs() * cfg.k).map(|r| r / cfg.k).collect());
                let sums = tape.segment_sum(coarse, seg, nodes.num_graphs())?;
                (tape.scale(sums, 1.0 / cfg.k as f64), Some(dp), Some(coarse))
            }
        };
        let graph_concept = tape.normalized_softmax(pooled, None)?;
        let logits = self.readout.forward(tape, store, graph_concept)?;
        Ok(CgnOutput {
            node_embeddings,
            node_concepts,
            diffpool,
            subgraph_concepts,
            graph_concept,
            logits,
        })
    }
}

/// Cross-entropy plus the DiffPool auxiliary losses; returns
/// `(total, cross_entropy)`.
pub fn cgn_loss(tape: &mut Tape, cfg: &CgnConfig, out: &CgnOutput, labels: &[usize]) -> Result<(Var, Var)> {
    let ce = cross_entropy(tape, out.logits, labels)?;
    let mut total = ce;
    if let Some(dp) = &out.diffpool {
        for (w, term) in [(cfg.link_weight, dp.link_loss), (cfg.entropy_weight, dp.entropy_loss)] {
            if w != 0.0 {
                let t = tape.scale(term, w);
                total = tape.add(total, t)?;
            }
        }
    }
    Ok((total, ce))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgnModel {
    pub config: CgnConfig,
    pub store: ParamStore,
    pub params: CgnParams,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    model: String,
    config: CgnConfig,
    params: ParamStore,
}

impl CgnModel {
    pub fn new(config: CgnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let params = CgnParams::register(&config, &mut store, seed);
        Ok(Self { config, store, params })
    }

    pub fn forward(&self, tape: &mut Tape, batch: &PaddedBatch) -> Result<CgnOutput> {
        self.params.forward(&self.config, &self.store, tape, batch)
    }

    pub fn predict(&self, batch: &PaddedBatch) -> Result<Vec<usize>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, batch)?;
        Ok(argmax_rows(tape.value(out.logits)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            model: self.config.variant.tag().into(),
            config: self.config.clone(),
            params: self.store.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.model != ck.config.variant.tag() {
            return Err(Error::Config(format!("checkpoint holds a '{}' model", ck.model)));
        }
        let mut model = Self::new(ck.config, 0)?;
        load_values(&mut model.store, &ck.params)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

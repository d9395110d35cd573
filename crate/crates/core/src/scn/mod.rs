//! The subgraph concept network.
//!
//! Nodes are processed in the compact layout of [`NodeLayout`]: padding rows
//! never enter the computation, and [`ScnTrace`] scatters results back to
//! the padded `B × N` geometry.

pub mod layers;
mod trace;

use std::fs;
use std::path::Path;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use layers::{ConvLayer, ConvStack, Edges, Linear, NormLayer};
pub use trace::ScnTrace;

use crate::error::{Error, Result};
use crate::graphdata::{NodeLayout, PaddedBatch};
use crate::ndiff::{BatchNormState, BatchStats, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScnConfig {
    /// Graph convolutions per stack.
    pub layers: usize,
    pub hidden: usize,
    /// Node concept width.
    pub s: usize,
    /// Number of subgraphs.
    pub k: usize,
    /// Subgraph concept width.
    pub s_sub: usize,
    /// Input feature width.
    pub features: usize,
    pub classes: usize,
    /// Pooling guard.
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_eps() -> f64 {
    1e-8
}

impl ScnConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("s", self.s),
            ("s_sub", self.s_sub),
            ("features", self.features),
            ("classes", self.classes),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.k < 2 {
            return Err(Error::Config(format!("need at least 2 subgraphs, got {}", self.k)));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::Config("eps must be positive".into()));
        }
        Ok(())
    }
}

/// Parameter handles of an SCN, registered in a fixed order so the layout
/// is a pure function of the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScnParams {
    pub initial: ConvStack,
    pub cluster: ConvLayer,
    pub cluster_norm: NormLayer,
    pub subgraph: Vec<ConvStack>,
    pub subgraph_norm: NormLayer,
    pub theta_hidden: Linear,
    pub theta_out: Linear,
    pub readout: Linear,
}

impl ScnParams {
    pub fn register(cfg: &ScnConfig, store: &mut ParamStore, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = &mut rng;
        let initial = ConvStack::register(store, "initial", cfg.layers, cfg.features, cfg.hidden, cfg.s, r);
        let cluster = ConvLayer::register(store, "cluster", cfg.s, cfg.k, r);
        let cluster_norm = NormLayer::register(store, "cluster_norm", cfg.k);
        let subgraph = (0..cfg.k)
            .map(|k| {
                ConvStack::register(
                    store,
                    &format!("subgraph{k}"),
                    cfg.layers,
                    cfg.s,
                    cfg.hidden,
                    cfg.s_sub,
                    r,
                )
            })
            .collect();
        let subgraph_norm = NormLayer::register(store, "subgraph_norm", cfg.s_sub);
        let theta_hidden = Linear::register(store, "theta.0", cfg.s_sub, cfg.hidden, r);
        let theta_out = Linear::register(store, "theta.1", cfg.hidden, 1, r);
        let readout = Linear::register(store, "readout", cfg.k, cfg.classes, r);
        Self {
            initial,
            cluster,
            cluster_norm,
            subgraph,
            subgraph_norm,
            theta_hidden,
            theta_out,
            readout,
        }
    }
}

/// Running statistics of the two batch norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScnNorms {
    pub cluster: BatchNormState,
    pub subgraph: BatchNormState,
}

/// Batch statistics gathered by one training-mode forward pass.
#[derive(Debug, Clone, Default)]
pub struct NormUpdates {
    pub cluster: Option<BatchStats>,
    pub subgraph: Option<BatchStats>,
}

/// Tape handles produced by one forward pass, in compact node order.
#[derive(Debug, Clone)]
pub struct ScnOutput {
    /// `M × s` output of the initial stack (before the concept activation).
    pub node_embeddings: Var,
    /// `M × s` graph-space node concepts.
    pub node_concepts: Var,
    /// `M × K` soft cluster assignments.
    pub assignments: Var,
    /// Per-cluster directed edge weights (`E × 1` each).
    pub edge_weights: Vec<Var>,
    /// `(K·M) × s_sub` subgraph-space node concepts, row `k·M + i`.
    pub subgraph_node_concepts: Var,
    /// `(B·K) × s_sub` pooled subgraph embeddings, row `b·K + k`.
    pub subgraph_embeddings: Var,
    /// `(B·K) × s_sub`.
    pub subgraph_concepts: Var,
    /// `B × K`.
    pub importance: Var,
    /// `B × K`.
    pub graph_concept: Var,
    /// `B × classes`.
    pub logits: Var,
    pub norm_updates: NormUpdates,
}

/// Pieces of the subgraph branch.
#[derive(Debug, Clone)]
pub struct SubgraphOutput {
    pub node_concepts: Var,
    pub embeddings: Var,
    pub concepts: Var,
    pub edge_weights: Vec<Var>,
    pub stats: Option<BatchStats>,
}

/// Compact node features as a tape leaf.
pub fn compact_features(tape: &mut Tape, batch: &PaddedBatch) -> Result<Var> {
    let f = batch.feature_dim;
    let mut data = Vec::with_capacity(batch.nodes.len() * f);
    for &r in batch.nodes.rows.iter() {
        data.extend_from_slice(batch.features.row(r));
    }
    Ok(tape.leaf(Tensor::new(vec![batch.nodes.len(), f], data)?))
}

pub fn unit_edges(nodes: &NodeLayout) -> Edges {
    Edges {
        src: nodes.src.clone(),
        dst: nodes.dst.clone(),
        weights: None,
    }
}

/// `h_ik = h_i · c_ik`.
pub fn reweight_nodes(tape: &mut Tape, h: Var, assignments: Var, k: usize) -> Result<Var> {
    let ck = tape.slice_cols(assignments, k, 1)?;
    tape.mul(h, ck)
}

/// Directed edge weights `c_ik · c_jk` (times the unit adjacency entry).
pub fn reweight_edges(
    tape: &mut Tape,
    assignments: Var,
    k: usize,
    src: &Rc<Vec<usize>>,
    dst: &Rc<Vec<usize>>,
) -> Result<Var> {
    let ck = tape.slice_cols(assignments, k, 1)?;
    let a = tape.gather_rows(ck, src.clone())?;
    let b = tape.gather_rows(ck, dst.clone())?;
    tape.mul(a, b)
}

impl ScnParams {
    /// Soft cluster assignment: convolution to `K` channels, batch norm over
    /// all nodes of the batch, softmax over clusters.
    pub fn cluster_assign(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        norms: &ScnNorms,
        concepts: Var,
        nodes: &NodeLayout,
        training: bool,
    ) -> Result<(Var, Option<BatchStats>)> {
        let z = self.cluster.forward(tape, store, concepts, &unit_edges(nodes), false)?;
        let (zn, stats) = self.cluster_norm.forward(tape, store, z, &norms.cluster, training)?;
        Ok((tape.softmax(zn, None)?, stats))
    }

    /// Re-embeds every cluster with its own stack, normalises jointly across
    /// clusters and pools each cluster by membership-weighted mean.
    #[allow(clippy::too_many_arguments)]
    pub fn subgraph_embed(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        norms: &ScnNorms,
        concepts: Var,
        assignments: Var,
        nodes: &NodeLayout,
        eps: f64,
        training: bool,
    ) -> Result<SubgraphOutput> {
        let k_total = self.subgraph.len();
        let m = nodes.len();
        let mut embedded = Vec::with_capacity(k_total);
        let mut members = Vec::with_capacity(k_total);
        let mut edge_weights = Vec::with_capacity(k_total);
        for (k, stack) in self.subgraph.iter().enumerate() {
            let xin = reweight_nodes(tape, concepts, assignments, k)?;
            let w = reweight_edges(tape, assignments, k, &nodes.src, &nodes.dst)?;
            let edges = Edges {
                src: nodes.src.clone(),
                dst: nodes.dst.clone(),
                weights: Some(w),
            };
            embedded.push(stack.forward(tape, store, xin, &edges)?);
            members.push(tape.slice_cols(assignments, k, 1)?);
            edge_weights.push(w);
        }
        let stacked = tape.concat(&embedded, 0)?;
        let (normed, stats) = self
            .subgraph_norm
            .forward(tape, store, stacked, &norms.subgraph, training)?;
        let node_concepts = tape.normalized_softmax(normed, None)?;

        let weight = tape.concat(&members, 0)?;
        let seg: Rc<Vec<usize>> = Rc::new(
            (0..k_total)
                .flat_map(|k| nodes.graph.iter().map(move |&g| g * k_total + k))
                .collect(),
        );
        debug_assert_eq!(seg.len(), k_total * m);
        let segments = nodes.num_graphs() * k_total;
        let weighted = tape.mul(node_concepts, weight)?;
        let num = tape.segment_sum(weighted, seg.clone(), segments)?;
        let den = tape.segment_sum(weight, seg, segments)?;
        let embeddings = tape.div(num, den, eps)?;
        let concepts = tape.normalized_softmax(embeddings, None)?;
        Ok(SubgraphOutput {
            node_concepts,
            embeddings,
            concepts,
            edge_weights,
            stats,
        })
    }

    /// Importance per subgraph, graph concept and class logits from the
    /// `(B·K) × s_sub` subgraph concepts.
    pub fn importance_and_readout(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        subgraph_concepts: Var,
        batch_size: usize,
    ) -> Result<(Var, Var, Var)> {
        let k = self.subgraph.len();
        let t = self.theta_hidden.forward(tape, store, subgraph_concepts)?;
        let t = tape.relu(t);
        let t = self.theta_out.forward(tape, store, t)?;
        let t = tape.sigmoid(t);
        let importance = tape.reshape(t, &[batch_size, k])?;
        let graph_concept = tape.normalized_softmax(importance, None)?;
        let logits = self.readout.forward(tape, store, graph_concept)?;
        Ok((importance, graph_concept, logits))
    }

    pub fn forward(
        &self,
        cfg: &ScnConfig,
        store: &ParamStore,
        norms: &ScnNorms,
        tape: &mut Tape,
        batch: &PaddedBatch,
        training: bool,
    ) -> Result<ScnOutput> {
        if batch.feature_dim != cfg.features {
            return Err(Error::shape("scn_forward", &[cfg.features], &[batch.feature_dim]));
        }
        if batch.nodes.is_empty() {
            return Err(Error::Param("batch has no nodes".into()));
        }
        let nodes = &batch.nodes;
        let x = compact_features(tape, batch)?;
        let node_embeddings = self.initial.forward(tape, store, x, &unit_edges(nodes))?;
        let node_concepts = tape.normalized_softmax(node_embeddings, None)?;
        let (assignments, cluster_stats) = self.cluster_assign(tape, store, norms, node_concepts, nodes, training)?;
        let sub = self.subgraph_embed(tape, store, norms, node_concepts, assignments, nodes, cfg.eps, training)?;
        let (importance, graph_concept, logits) =
            self.importance_and_readout(tape, store, sub.concepts, batch.batch_size)?;
        Ok(ScnOutput {
            node_embeddings,
            node_concepts,
            assignments,
            edge_weights: sub.edge_weights,
            subgraph_node_concepts: sub.node_concepts,
            subgraph_embeddings: sub.embeddings,
            subgraph_concepts: sub.concepts,
            importance,
            graph_concept,
            logits,
            norm_updates: NormUpdates {
                cluster: cluster_stats,
                subgraph: sub.stats,
            },
        })
    }
}

/// A configured SCN with its parameters and normalisation state.
#[derive(Debug, Clone, PartialEq)]
pub struct ScnModel {
    pub config: ScnConfig,
    pub store: ParamStore,
    pub params: ScnParams,
    pub norms: ScnNorms,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    model: String,
    config: ScnConfig,
    params: ParamStore,
    norms: ScnNorms,
}

impl ScnModel {
    pub fn new(config: ScnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let params = ScnParams::register(&config, &mut store, seed);
        let norms = ScnNorms {
            cluster: BatchNormState::new(config.k),
            subgraph: BatchNormState::new(config.s_sub),
        };
        Ok(Self {
            config,
            store,
            params,
            norms,
        })
    }

    pub fn forward(&self, tape: &mut Tape, batch: &PaddedBatch, training: bool) -> Result<ScnOutput> {
        self.params
            .forward(&self.config, &self.store, &self.norms, tape, batch, training)
    }

    pub fn apply_norm_updates(&mut self, updates: &NormUpdates) {
        if let Some(s) = &updates.cluster {
            self.norms.cluster.update(s);
        }
        if let Some(s) = &updates.subgraph {
            self.norms.subgraph.update(s);
        }
    }

    /// Evaluation-mode forward pass returning the full trace.
    pub fn trace(&self, batch: &PaddedBatch) -> Result<ScnTrace> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, batch, false)?;
        ScnTrace::collect(&tape, &out, batch, &self.config)
    }

    pub fn predict(&self, batch: &PaddedBatch) -> Result<Vec<usize>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, batch, false)?;
        Ok(argmax_rows(tape.value(out.logits)))
    }

    pub fn to_json(&self) -> Result<String> {
        let ck = Checkpoint {
            model: "scn".into(),
            config: self.config.clone(),
            params: self.store.clone(),
            norms: self.norms.clone(),
        };
        Ok(serde_json::to_string(&ck)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.model != "scn" {
            return Err(Error::Config(format!("checkpoint holds a '{}' model", ck.model)));
        }
        let mut model = Self::new(ck.config, 0)?;
        load_values(&mut model.store, &ck.params)?;
        model.norms = ck.norms;
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

/// Copies values from `saved` into `store`, matching by name and shape.
pub fn load_values(store: &mut ParamStore, saved: &ParamStore) -> Result<()> {
    if saved.len() != store.len() {
        return Err(Error::Config(format!(
            "checkpoint has {} parameters, model expects {}",
            saved.len(),
            store.len()
        )));
    }
    for p in saved.iter() {
        let id = store
            .find(&p.name)
            .ok_or_else(|| Error::Config(format!("unknown parameter '{}'", p.name)))?;
        let target = store.get_mut(id);
        if target.value.shape() != p.value.shape() {
            return Err(Error::shape("checkpoint", target.value.shape(), p.value.shape()));
        }
        target.value = p.value.clone();
    }
    store.zero_grad();
    Ok(())
}

/// Row-wise argmax (lowest index on ties).
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    let (rows, cols) = t.rows_cols();
    (0..rows)
        .map(|r| {
            let row = &t.data()[r * cols..(r + 1) * cols];
            let mut best = 0;
            for c in 1..cols {
                if row[c] > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

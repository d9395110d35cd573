use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::AnyModel;
use super::train::{make_batches, RunManifest, EVAL_BATCH};
use super::{load_dataset, write_atomic};
use crate::error::{Error, Result};
use crate::explain::{write_bundle, ExplainOptions, Explained, ExplanationBundle};
use crate::graphdata::{num_classes, split, Graph, PaddedBatch, Split};
use crate::metrics::{
    argmax, graph_completeness, node_completeness, percent_correct, subgraph_completeness, ClusterScores, ConceptLevel,
    GraphConcepts, SubgraphMode,
};
use crate::ndiff::{Tape, Tensor};

fn rows_of(t: &Tensor, start: usize, count: usize) -> Vec<Vec<f64>> {
    (start..start + count).map(|r| t.row(r).to_vec()).collect()
}

/// Per-graph concept records of one padded batch.
pub fn batch_concepts(model: &AnyModel, batch: &PaddedBatch) -> Result<Vec<GraphConcepts>> {
    match model {
        AnyModel::Scn(m) => {
            let tr = m.trace(batch)?;
            let (b, n, k) = (tr.batch_size, tr.n_pad, tr.k());
            let s = tr.node_concepts_graph.shape()[2];
            let s_sub = tr.subgraph_concepts.shape()[2];
            let flat = |t: &Tensor, w: usize| t.clone().reshape(vec![t.len() / w, w]);
            let q = flat(&tr.node_concepts_graph, s)?;
            let c = flat(&tr.assignments, k)?;
            let sub_nodes = flat(&tr.node_concepts_subgraph, s_sub)?;
            let sub = flat(&tr.subgraph_concepts, s_sub)?;
            (0..b)
                .map(|g| {
                    let count = batch.node_counts[g];
                    let assignments = rows_of(&c, g * n, count);
                    let subgraph_node_concepts = assignments
                        .iter()
                        .enumerate()
                        .map(|(i, a)| sub_nodes.row(argmax(a) * b * n + g * n + i).to_vec())
                        .collect();
                    Ok(GraphConcepts {
                        label: batch.labels[g],
                        prediction: argmax(tr.logits.row(g)),
                        node_concepts: rows_of(&q, g * n, count),
                        assignments: Some(assignments),
                        subgraph_node_concepts: Some(subgraph_node_concepts),
                        subgraph_concepts: Some(rows_of(&sub, g * k, k)),
                        importance: Some(tr.importance.row(g).to_vec()),
                        graph_concept: tr.graph_concept.row(g).to_vec(),
                    })
                })
                .collect()
        }
        AnyModel::Cgn(m) => {
            let mut tape = Tape::new();
            let out = m.forward(&mut tape, batch)?;
            let q = tape.value(out.node_concepts).clone();
            let assign = out.diffpool.map(|d| tape.value(d.assignment).clone());
            let sub = out.subgraph_concepts.map(|v| tape.value(v).clone());
            let gc = tape.value(out.graph_concept);
            let logits = tape.value(out.logits);
            let offsets = batch.nodes.offsets();
            let k = m.config.k;
            Ok((0..batch.batch_size)
                .map(|g| {
                    let (off, count) = (offsets[g], batch.node_counts[g]);
                    GraphConcepts {
                        label: batch.labels[g],
                        prediction: argmax(logits.row(g)),
                        node_concepts: rows_of(&q, off, count),
                        assignments: assign.as_ref().map(|a| rows_of(a, off, count)),
                        subgraph_node_concepts: None,
                        subgraph_concepts: sub.as_ref().map(|s| rows_of(s, g * k, k)),
                        importance: None,
                        graph_concept: gc.row(g).to_vec(),
                    }
                })
                .collect())
        }
    }
}

/// Concept records for `indices`, in order.
pub fn collect_concepts(model: &AnyModel, graphs: &[Graph], indices: &[usize]) -> Result<Vec<GraphConcepts>> {
    let mut out = Vec::with_capacity(indices.len());
    for b in make_batches(graphs, indices, EVAL_BATCH)? {
        out.extend(batch_concepts(model, &b)?);
    }
    Ok(out)
}

/// Every metric of one trained run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub model: String,
    pub seed: u64,
    /// Percentages for accuracy and completeness; `[0, 1]` for cluster scores.
    pub metrics: BTreeMap<String, f64>,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "dataset,model,seed,metric,value";

    pub fn csv_rows(&self) -> String {
        self.metrics
            .iter()
            .map(|(k, v)| format!("{},{},{},{k},{v}\n", self.dataset, self.model, self.seed))
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

fn cluster_rows(graphs: &[GraphConcepts]) -> Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut a = Vec::new();
    let mut q = Vec::new();
    for g in graphs {
        a.extend(g.assignments.as_ref()?.iter().cloned());
        q.extend(g.node_concepts.iter().cloned());
    }
    Some((a, q))
}

/// Computes all metrics on a split of `graphs`.
pub fn evaluate_split(model: &AnyModel, graphs: &[Graph], sp: &Split, dataset: &str, seed: u64) -> Result<EvalReport> {
    if graphs.is_empty() || model.features() != graphs[0].feature_dim() {
        return Err(Error::Config(format!(
            "checkpoint expects {} features, dataset has {}",
            model.features(),
            graphs.first().map_or(0, Graph::feature_dim)
        )));
    }
    if model.classes() != num_classes(graphs) {
        return Err(Error::Config(format!(
            "checkpoint has {} classes, dataset has {}",
            model.classes(),
            num_classes(graphs)
        )));
    }
    let train = collect_concepts(model, graphs, &sp.train)?;
    let test = collect_concepts(model, graphs, &sp.test)?;
    let mut m = BTreeMap::new();
    for (slice, rows) in [("train", &train), ("test", &test)] {
        let pred: Vec<usize> = rows.iter().map(|g| g.prediction).collect();
        let labels: Vec<usize> = rows.iter().map(|g| g.label).collect();
        m.insert(format!("accuracy_{slice}"), percent_correct(&pred, &labels)?);
        if let Some((a, q)) = cluster_rows(rows) {
            let s = ClusterScores::compute(&a, &q)?;
            m.insert(format!("assignment_strength_{slice}"), s.assignment_strength);
            m.insert(format!("utilisation_{slice}"), s.utilisation);
            m.insert(format!("consistency_{slice}"), s.consistency);
            for (k, v) in s.conditional_strength.iter().enumerate() {
                m.insert(format!("conditional_strength_{}_{slice}", k + 1), *v);
            }
        }
    }
    m.insert("completeness_graph".into(), graph_completeness(&train, &test)?);
    m.insert(
        "completeness_node_graph_space".into(),
        node_completeness(&train, &test, ConceptLevel::NodeGraphSpace)?,
    );
    if train[0].subgraph_node_concepts.is_some() {
        m.insert(
            "completeness_node_subgraph_space".into(),
            node_completeness(&train, &test, ConceptLevel::NodeSubgraphSpace)?,
        );
    }
    if train[0].subgraph_concepts.is_some() {
        for mode in SubgraphMode::ALL {
            if mode == SubgraphMode::ConcatWithImportance && train[0].importance.is_none() {
                continue;
            }
            m.insert(
                format!("completeness_subgraph_{}", mode.as_str()),
                subgraph_completeness(&train, &test, mode)?,
            );
        }
    }
    Ok(EvalReport {
        dataset: dataset.into(),
        model: model.kind().as_str().into(),
        seed,
        metrics: m,
    })
}

/// A run directory's manifest, checkpoint and dataset, with its split.
pub struct LoadedRun {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub model: AnyModel,
    pub graphs: Vec<Graph>,
    pub split: Split,
}

pub fn load_run(dir: &Path, graphs: Option<&[Graph]>) -> Result<LoadedRun> {
    let manifest = RunManifest::load(&dir.join("manifest.json"))?;
    let model = AnyModel::load(&dir.join(&manifest.checkpoint))?;
    let graphs = match graphs {
        Some(g) => g.to_vec(),
        None => load_dataset(&manifest.config)?,
    };
    let split = split(&graphs, manifest.config.train_fraction, manifest.seed)?;
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        manifest,
        model,
        graphs,
        split,
    })
}

/// Evaluates each run directory, writing `metrics.json` beside its manifest
/// and returning the reports in input order.
pub fn evaluate_runs(dirs: &[PathBuf], graphs: Option<&[Graph]>) -> Result<Vec<EvalReport>> {
    let mut reports = Vec::new();
    for dir in dirs {
        let run = load_run(dir, graphs)?;
        let report = evaluate_split(
            &run.model,
            &run.graphs,
            &run.split,
            &run.manifest.config.dataset,
            run.manifest.seed,
        )?;
        let json = serde_json::to_string_pretty(&report)?;
        write_atomic(&dir.join("metrics.json"), json.as_bytes())?;
        reports.push(report);
    }
    Ok(reports)
}

pub fn metrics_csv(reports: &[EvalReport]) -> String {
    let mut s = format!("{}\n", EvalReport::CSV_HEADER);
    for r in reports {
        s.push_str(&r.csv_rows());
    }
    s
}

/// Explains the test slice of a run, writing DOT files and
/// `explanations.json` into `out`.
pub fn explain_run(
    run: &LoadedRun,
    out: &Path,
    hops: usize,
    representatives: usize,
    instances: usize,
) -> Result<ExplanationBundle> {
    let concepts = collect_concepts(&run.model, &run.graphs, &run.split.test)?;
    let items: Vec<Explained> = run
        .split
        .test
        .iter()
        .zip(&concepts)
        .map(|(&id, c)| Explained {
            id,
            graph: &run.graphs[id],
            concepts: c,
        })
        .collect();
    let opts = ExplainOptions {
        dataset: run.manifest.config.dataset.clone(),
        model: run.model.kind().as_str().into(),
        hops,
        representatives,
        instances,
    };
    write_bundle(out, &items, &opts)
}

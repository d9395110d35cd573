//! Global concept visualisation and instance-level explanations, exported
//! as DOT files and a JSON report.

pub mod dot;

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphdata::{Colour, Graph};
use crate::metrics::{argmax, concept_code, ConceptLevel, GraphConcepts};
use dot::{cluster_shade, DotWriter};

/// Default representatives per concept.
pub const DEFAULT_REPRESENTATIVES: usize = 5;

/// A graph paired with the concepts a model assigned to it.
#[derive(Debug, Clone, Copy)]
pub struct Explained<'a> {
    /// Index of the graph in its dataset.
    pub id: usize,
    pub graph: &'a Graph,
    pub concepts: &'a GraphConcepts,
}

/// Nodes sharing one binarized concept code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptGroup {
    pub code: String,
    /// `(graph id, node id)` pairs, sorted.
    pub members: Vec<(usize, usize)>,
    pub centroid: Vec<f64>,
    /// Members nearest the centroid, closest first.
    pub representatives: Vec<(usize, usize)>,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn mean_rows<'a>(rows: impl Iterator<Item = &'a [f64]>, width: usize) -> Vec<f64> {
    let mut sum = vec![0.0; width];
    let mut n = 0usize;
    for r in rows {
        for (s, v) in sum.iter_mut().zip(r) {
            *s += v;
        }
        n += 1;
    }
    sum.iter_mut().for_each(|s| *s /= n.max(1) as f64);
    sum
}

/// Up to `r` keys sorted by distance, ties broken by key.
fn nearest<K: Ord + Copy>(mut scored: Vec<(f64, K)>, r: usize) -> Vec<K> {
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(r).map(|(_, k)| k).collect()
}

fn node_rows<'a>(e: &Explained<'a>, level: ConceptLevel) -> Result<&'a [Vec<f64>]> {
    match level {
        ConceptLevel::NodeGraphSpace => Ok(&e.concepts.node_concepts),
        ConceptLevel::NodeSubgraphSpace => e
            .concepts
            .subgraph_node_concepts
            .as_deref()
            .ok_or_else(|| Error::Contract("model provides no subgraph-space node concepts".into())),
        other => Err(Error::Contract(format!("{other:?} is not a node level"))),
    }
}

/// Groups nodes by binarized concept code; groups are ordered by code.
pub fn concept_groups(items: &[Explained], level: ConceptLevel, r: usize) -> Result<Vec<ConceptGroup>> {
    if items.iter().all(|e| e.concepts.num_nodes() == 0) {
        return Err(Error::Contract("no nodes to group".into()));
    }
    let mut by_code: BTreeMap<String, Vec<(usize, usize, &[f64])>> = BTreeMap::new();
    for e in items {
        for (v, row) in node_rows(e, level)?.iter().enumerate() {
            by_code.entry(concept_code(row)).or_default().push((e.id, v, row));
        }
    }
    Ok(by_code
        .into_iter()
        .map(|(code, mut members)| {
            members.sort_by_key(|m| (m.0, m.1));
            let width = members[0].2.len();
            let centroid = mean_rows(members.iter().map(|m| m.2), width);
            let scored = members
                .iter()
                .map(|m| (euclidean(m.2, &centroid), (m.0, m.1)))
                .collect();
            ConceptGroup {
                code,
                representatives: nearest(scored, r),
                members: members.iter().map(|m| (m.0, m.1)).collect(),
                centroid,
            }
        })
        .collect())
}

/// Nodes within `p` hops of `anchor`, ascending.
pub fn neighbourhood(graph: &Graph, anchor: usize, p: usize) -> Vec<usize> {
    let adj = graph.neighbors();
    let mut dist = vec![usize::MAX; graph.n];
    dist[anchor] = 0;
    let mut queue = VecDeque::from([anchor]);
    while let Some(u) = queue.pop_front() {
        if dist[u] == p {
            continue;
        }
        for &w in &adj[u] {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    (0..graph.n).filter(|&v| dist[v] != usize::MAX).collect()
}

fn feature_colour(graph: &Graph, v: usize) -> String {
    match graph.features.get(v).and_then(|f| Colour::from_features(f)) {
        Some(Colour::Blue) => "#6baed6".into(),
        Some(Colour::Green) => "#74c476".into(),
        Some(Colour::Red) => "#fb6a4a".into(),
        None => "#d9d9d9".into(),
    }
}

/// One DOT graph per group: each representative's `p`-hop neighbourhood
/// with the anchor drawn as a double circle.
pub fn node_concept_dot(items: &[Explained], group: &ConceptGroup, p: usize, title: &str) -> Result<String> {
    let lookup: BTreeMap<usize, &Graph> = items.iter().map(|e| (e.id, e.graph)).collect();
    let mut w = DotWriter::new(title, &format!("concept {}", group.code));
    for (r, &(gid, anchor)) in group.representatives.iter().enumerate() {
        let g = lookup
            .get(&gid)
            .ok_or_else(|| Error::Contract(format!("graph {gid} not provided")))?;
        let keep = neighbourhood(g, anchor, p);
        w.open_cluster(&format!("r{r}"), &format!("graph {gid}, node {anchor}"));
        for &v in &keep {
            let mut attrs = vec![("fillcolor", feature_colour(g, v)), ("label", v.to_string())];
            if v == anchor {
                attrs.push(("shape", "doublecircle".into()));
                attrs.push(("penwidth", "3".into()));
            }
            w.node(&format!("r{r}_{v}"), &attrs);
        }
        for &[a, b] in &g.edges {
            if keep.binary_search(&a).is_ok() && keep.binary_search(&b).is_ok() {
                w.edge(&format!("r{r}_{a}"), &format!("r{r}_{b}"), &[]);
            }
        }
        w.close_cluster();
    }
    Ok(w.finish())
}

/// Full graph with node fill proportional to membership in cluster `k`.
pub fn cluster_dot(e: &Explained, k: usize, title: &str, label: &str) -> Result<String> {
    let a = e
        .concepts
        .assignments
        .as_ref()
        .ok_or_else(|| Error::Contract("model provides no cluster assignments".into()))?;
    let mut w = DotWriter::new(title, label);
    for (v, row) in a.iter().enumerate() {
        let c = *row
            .get(k)
            .ok_or_else(|| Error::Contract(format!("cluster {k} out of range")))?;
        w.node(
            &format!("n{v}"),
            &[
                ("fillcolor", cluster_shade(k, c)),
                ("label", v.to_string()),
                ("tooltip", format!("{c:.4}")),
            ],
        );
    }
    for &[x, y] in &e.graph.edges {
        w.edge(&format!("n{x}"), &format!("n{y}"), &[]);
    }
    Ok(w.finish())
}

/// Mean membership in cluster `k` over motif nodes minus the mean over
/// base nodes, pooled over graphs that carry a motif; `None` without any.
pub fn motif_separation(items: &[Explained], k: usize) -> Option<f64> {
    let (mut motif, mut base) = ((0.0, 0usize), (0.0, 0usize));
    for e in items {
        let mask = e.graph.in_motif();
        if !mask.iter().any(|&m| m) {
            continue;
        }
        let a = e.concepts.assignments.as_ref()?;
        for (v, &m) in mask.iter().enumerate() {
            let acc = if m { &mut motif } else { &mut base };
            acc.0 += a[v][k];
            acc.1 += 1;
        }
    }
    (motif.1 > 0 && base.1 > 0).then(|| motif.0 / motif.1 as f64 - base.0 / base.1 as f64)
}

/// Representative graphs of subgraph concept `k`, nearest the centroid of
/// that concept first.
pub fn subgraph_representatives(items: &[Explained], k: usize, r: usize) -> Result<Vec<usize>> {
    let mut rows = Vec::with_capacity(items.len());
    for e in items {
        let sc = e
            .concepts
            .subgraph_concepts
            .as_ref()
            .ok_or_else(|| Error::Contract("model provides no subgraph concepts".into()))?;
        let row = sc
            .get(k)
            .ok_or_else(|| Error::Contract(format!("cluster {k} out of range")))?;
        rows.push((e.id, row.as_slice()));
    }
    if rows.is_empty() {
        return Err(Error::Contract("no graphs to visualise".into()));
    }
    let centroid = mean_rows(rows.iter().map(|r| r.1), rows[0].1.len());
    Ok(nearest(
        rows.iter().map(|r| (euclidean(r.1, &centroid), r.0)).collect(),
        r,
    ))
}

/// Instance-level explanation of one graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceExplanation {
    pub graph_id: usize,
    pub prediction: usize,
    pub label: usize,
    /// Argmax cluster of every node.
    pub node_cluster: Vec<usize>,
    /// Largest assignment of every node.
    pub node_strength: Vec<f64>,
    /// Node ids per cluster; together they partition the graph.
    pub cluster_nodes: Vec<Vec<usize>>,
    pub importance: Vec<f64>,
    pub graph_concept: Vec<f64>,
    /// Cluster holding the most ground-truth motif nodes (lowest on ties).
    pub motif_cluster: Option<usize>,
}

pub fn explain_instance(e: &Explained) -> Result<InstanceExplanation> {
    let a = e
        .concepts
        .assignments
        .as_ref()
        .ok_or_else(|| Error::Contract("model provides no cluster assignments".into()))?;
    let k = a.first().map_or(0, Vec::len);
    let node_cluster: Vec<usize> = a.iter().map(|r| argmax(r)).collect();
    let mut cluster_nodes = vec![Vec::new(); k];
    for (v, &c) in node_cluster.iter().enumerate() {
        cluster_nodes[c].push(v);
    }
    let in_motif = e.graph.in_motif();
    let motif_counts: Vec<f64> = cluster_nodes
        .iter()
        .map(|ns| ns.iter().filter(|&&v| in_motif[v]).count() as f64)
        .collect();
    let motif_cluster = in_motif.iter().any(|&m| m).then(|| argmax(&motif_counts));
    Ok(InstanceExplanation {
        graph_id: e.id,
        prediction: e.concepts.prediction,
        label: e.concepts.label,
        node_strength: a
            .iter()
            .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect(),
        node_cluster,
        cluster_nodes,
        importance: e.concepts.importance.clone().unwrap_or_default(),
        graph_concept: e.concepts.graph_concept.clone(),
        motif_cluster,
    })
}

/// One DOT per cluster: members solid, other nodes faded, importance in
/// the title.
pub fn instance_dots(e: &Explained, x: &InstanceExplanation, title: &str) -> Vec<String> {
    (0..x.cluster_nodes.len())
        .map(|k| {
            let imp = x
                .importance
                .get(k)
                .map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
            let mut w = DotWriter::new(
                &format!("{title}_{k}"),
                &format!("graph {} cluster {k} importance {imp}", x.graph_id),
            );
            for v in 0..e.graph.n {
                let member = x.node_cluster[v] == k;
                let mut attrs = vec![
                    ("label", v.to_string()),
                    (
                        "fillcolor",
                        cluster_shade(k, if member { x.node_strength[v] } else { 0.0 }),
                    ),
                ];
                if !member {
                    attrs.push(("style", "filled,dashed".into()));
                    attrs.push(("fontcolor", "#bbbbbb".into()));
                    attrs.push(("color", "#bbbbbb".into()));
                }
                w.node(&format!("n{v}"), &attrs);
            }
            for &[a, b] in &e.graph.edges {
                let inside = x.node_cluster[a] == k && x.node_cluster[b] == k;
                let attrs = if inside {
                    vec![("penwidth", "2".to_string())]
                } else {
                    vec![("color", "#cccccc".to_string())]
                };
                w.edge(&format!("n{a}"), &format!("n{b}"), &attrs);
            }
            w.finish()
        })
        .collect()
}

/// Markdown table of per-cluster size, mean strength and importance.
pub fn activation_table(x: &InstanceExplanation) -> String {
    let mut s = String::from("| Cluster | Nodes | Mean strength | Importance |\n|---|---|---|---|\n");
    for (k, nodes) in x.cluster_nodes.iter().enumerate() {
        let mean = if nodes.is_empty() {
            0.0
        } else {
            nodes.iter().map(|&v| x.node_strength[v]).sum::<f64>() / nodes.len() as f64
        };
        let imp = x.importance.get(k).map_or_else(|| "n/a".into(), |v| format!("{v:.4}"));
        let _ = writeln!(s, "| {k} | {} | {mean:.4} | {imp} |", nodes.len());
    }
    s
}

/// Per-cluster summary in `explanations.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub representatives: Vec<usize>,
    pub motif_separation: Option<f64>,
}

/// Contents of `explanations.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationBundle {
    pub dataset: String,
    pub model: String,
    pub hops: usize,
    pub representatives: usize,
    pub node_concepts: Vec<ConceptGroup>,
    pub clusters: Vec<ClusterSummary>,
    pub instances: Vec<InstanceExplanation>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ExplainOptions {
    pub dataset: String,
    pub model: String,
    pub hops: usize,
    pub representatives: usize,
    /// Graphs explained individually; the first `instances` items.
    pub instances: usize,
}

/// Writes every DOT file and `explanations.json` into `dir`.
///
/// Files are named `{dataset}_{model}_{level}_{id}.dot` with levels
/// `node`, `subgraph` and `instance`.
pub fn write_bundle(dir: &Path, items: &[Explained], opts: &ExplainOptions) -> Result<ExplanationBundle> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let prefix = format!("{}_{}", opts.dataset, opts.model);
    let mut files = Vec::new();
    let mut emit = |name: String, body: &str| -> Result<()> {
        let path = dir.join(&name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        files.push(name);
        Ok(())
    };

    let groups = concept_groups(items, ConceptLevel::NodeGraphSpace, opts.representatives)?;
    for (i, g) in groups.iter().enumerate() {
        let title = format!("{prefix}_node_{i}");
        emit(format!("{title}.dot"), &node_concept_dot(items, g, opts.hops, &title)?)?;
    }

    let k = items
        .first()
        .and_then(|e| e.concepts.assignments.as_ref())
        .and_then(|a| a.first())
        .map_or(0, Vec::len);
    let mut clusters = Vec::new();
    if items.iter().all(|e| e.concepts.subgraph_concepts.is_some()) {
        let by_id: BTreeMap<usize, &Explained> = items.iter().map(|e| (e.id, e)).collect();
        for c in 0..k {
            let reps = subgraph_representatives(items, c, opts.representatives)?;
            for (rank, gid) in reps.iter().enumerate() {
                let title = format!("{prefix}_subgraph_{c}_{rank}");
                let label = format!("cluster {c}, graph {gid}");
                emit(format!("{title}.dot"), &cluster_dot(by_id[gid], c, &title, &label)?)?;
            }
            clusters.push(ClusterSummary {
                cluster: c,
                representatives: reps,
                motif_separation: motif_separation(items, c),
            });
        }
    }

    let mut instances = Vec::new();
    if k > 0 {
        for e in items.iter().take(opts.instances) {
            let x = explain_instance(e)?;
            let title = format!("{prefix}_instance_{}", e.id);
            for (c, body) in instance_dots(e, &x, &title).iter().enumerate() {
                emit(format!("{title}_{c}.dot"), body)?;
            }
            emit(format!("{title}.md"), &activation_table(&x))?;
            instances.push(x);
        }
    }

    let bundle = ExplanationBundle {
        dataset: opts.dataset.clone(),
        model: opts.model.clone(),
        hops: opts.hops,
        representatives: opts.representatives,
        node_concepts: groups,
        clusters,
        instances,
        files,
    };
    let path = dir.join("explanations.json");
    std::fs::write(&path, serde_json::to_string_pretty(&bundle)?).map_err(|e| Error::io(&path, e))?;
    Ok(bundle)
}

#[cfg(test)]
mod tests;

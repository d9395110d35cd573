use serde::{Deserialize, Serialize};

use super::scores::argmax;
use super::tree::{DecisionTree, TreeParams};
use crate::error::{Error, Result};

/// Concept encodings of one graph, independent of the model that made them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConcepts {
    pub label: usize,
    pub prediction: usize,
    /// `n × s` node concepts in the full-graph space.
    pub node_concepts: Vec<Vec<f64>>,
    /// `n × K` soft cluster assignments.
    pub assignments: Option<Vec<Vec<f64>>>,
    /// `n × s_sub` node concepts in the space of each node's argmax cluster.
    pub subgraph_node_concepts: Option<Vec<Vec<f64>>>,
    /// `K × width` subgraph concepts.
    pub subgraph_concepts: Option<Vec<Vec<f64>>>,
    /// `K` subgraph importance scores.
    pub importance: Option<Vec<f64>>,
    pub graph_concept: Vec<f64>,
}

impl GraphConcepts {
    pub fn num_nodes(&self) -> usize {
        self.node_concepts.len()
    }

    /// Argmax cluster per node.
    pub fn hard_clusters(&self) -> Option<Vec<usize>> {
        self.assignments.as_ref().map(|a| a.iter().map(|r| argmax(r)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptLevel {
    NodeGraphSpace,
    NodeSubgraphSpace,
    Subgraph,
    Graph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgraphMode {
    Individual,
    Concat,
    ConcatWithImportance,
}

impl SubgraphMode {
    pub const ALL: [SubgraphMode; 3] = [Self::Individual, Self::Concat, Self::ConcatWithImportance];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Individual => "individual",
            Self::Concat => "concat",
            Self::ConcatWithImportance => "concat_with_importance",
        }
    }
}

/// Instances with a fixed-width encoding and a target class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptTable {
    pub level: ConceptLevel,
    pub encodings: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

fn missing(what: &str) -> Error {
    Error::Contract(format!("model provides no {what}"))
}

impl ConceptTable {
    pub fn new(level: ConceptLevel, encodings: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if encodings.len() != labels.len() {
            return Err(Error::shape("concept_table", &[encodings.len()], &[labels.len()]));
        }
        if let Some(first) = encodings.first() {
            if let Some(r) = encodings.iter().find(|r| r.len() != first.len()) {
                return Err(Error::shape("concept_table", &[first.len()], &[r.len()]));
            }
        }
        Ok(Self {
            level,
            encodings,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.encodings.first().map_or(0, Vec::len)
    }

    pub fn graph_level(graphs: &[GraphConcepts]) -> Result<Self> {
        Self::new(
            ConceptLevel::Graph,
            graphs.iter().map(|g| g.graph_concept.clone()).collect(),
            graphs.iter().map(|g| g.label).collect(),
        )
    }

    /// One row per node, labelled with its graph's class.
    pub fn node_level(graphs: &[GraphConcepts], level: ConceptLevel) -> Result<Self> {
        let (mut enc, mut labels) = (Vec::new(), Vec::new());
        for g in graphs {
            let rows = match level {
                ConceptLevel::NodeGraphSpace => &g.node_concepts,
                ConceptLevel::NodeSubgraphSpace => g
                    .subgraph_node_concepts
                    .as_ref()
                    .ok_or_else(|| missing("subgraph-space node concepts"))?,
                _ => return Err(Error::Contract(format!("{level:?} is not a node level"))),
            };
            enc.extend(rows.iter().cloned());
            labels.extend(std::iter::repeat_n(g.label, rows.len()));
        }
        Self::new(level, enc, labels)
    }

    /// Concept of subgraph `k` alone.
    pub fn subgraph_individual(graphs: &[GraphConcepts], k: usize) -> Result<Self> {
        let mut enc = Vec::with_capacity(graphs.len());
        for g in graphs {
            let sc = g
                .subgraph_concepts
                .as_ref()
                .ok_or_else(|| missing("subgraph concepts"))?;
            enc.push(
                sc.get(k)
                    .ok_or_else(|| Error::Contract(format!("subgraph {k} out of range")))?
                    .clone(),
            );
        }
        Self::new(ConceptLevel::Subgraph, enc, graphs.iter().map(|g| g.label).collect())
    }

    /// All subgraph concepts concatenated, optionally followed by the
    /// importance scores.
    pub fn subgraph_concat(graphs: &[GraphConcepts], with_importance: bool) -> Result<Self> {
        let mut enc = Vec::with_capacity(graphs.len());
        for g in graphs {
            let sc = g
                .subgraph_concepts
                .as_ref()
                .ok_or_else(|| missing("subgraph concepts"))?;
            let mut row: Vec<f64> = sc.iter().flatten().copied().collect();
            if with_importance {
                row.extend(g.importance.as_ref().ok_or_else(|| missing("importance scores"))?);
            }
            enc.push(row);
        }
        Self::new(ConceptLevel::Subgraph, enc, graphs.iter().map(|g| g.label).collect())
    }
}

/// Accuracy in percent of `predictions` against `labels`.
pub fn percent_correct(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::shape("accuracy", &[predictions.len()], &[labels.len()]));
    }
    if labels.is_empty() {
        return Err(Error::Contract("accuracy of an empty set".into()));
    }
    let hit = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(100.0 * hit as f64 / labels.len() as f64)
}

/// Fits a tree on `train` and reports its test accuracy in percent.
pub fn concept_completeness(train: &ConceptTable, test: &ConceptTable) -> Result<f64> {
    if train.width() != test.width() {
        return Err(Error::shape("concept_completeness", &[train.width()], &[test.width()]));
    }
    let tree = DecisionTree::fit(&train.encodings, &train.labels, TreeParams::default())?;
    percent_correct(&tree.predict(&test.encodings)?, &test.labels)
}

pub fn subgraph_completeness(train: &[GraphConcepts], test: &[GraphConcepts], mode: SubgraphMode) -> Result<f64> {
    match mode {
        SubgraphMode::Individual => {
            let k = train
                .first()
                .and_then(|g| g.subgraph_concepts.as_ref())
                .map(Vec::len)
                .ok_or_else(|| missing("subgraph concepts"))?;
            let mut total = 0.0;
            for j in 0..k {
                total += concept_completeness(
                    &ConceptTable::subgraph_individual(train, j)?,
                    &ConceptTable::subgraph_individual(test, j)?,
                )?;
            }
            Ok(total / k as f64)
        }
        SubgraphMode::Concat | SubgraphMode::ConcatWithImportance => {
            let imp = mode == SubgraphMode::ConcatWithImportance;
            concept_completeness(
                &ConceptTable::subgraph_concat(train, imp)?,
                &ConceptTable::subgraph_concat(test, imp)?,
            )
        }
    }
}

pub fn node_completeness(train: &[GraphConcepts], test: &[GraphConcepts], level: ConceptLevel) -> Result<f64> {
    concept_completeness(
        &ConceptTable::node_level(train, level)?,
        &ConceptTable::node_level(test, level)?,
    )
}

pub fn graph_completeness(train: &[GraphConcepts], test: &[GraphConcepts]) -> Result<f64> {
    concept_completeness(&ConceptTable::graph_level(train)?, &ConceptTable::graph_level(test)?)
}

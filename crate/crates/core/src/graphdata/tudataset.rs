use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use super::Graph;
use crate::error::{Error, Result};

struct Lines {
    file: String,
    rows: Vec<(usize, String)>,
}

fn read_lines(dir: &Path, name: &str, suffix: &str) -> Result<Option<Lines>> {
    let path = dir.join(format!("{name}_{suffix}.txt"));
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound && suffix == "node_labels" => return Ok(None),
        Err(e) => return Err(Error::io(path, e)),
    };
    let rows = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .collect();
    Ok(Some(Lines {
        file: path.display().to_string(),
        rows,
    }))
}

fn parse_int(lines: &Lines, line: usize, s: &str) -> Result<i64> {
    s.trim().parse().map_err(|_| Error::Format {
        file: lines.file.clone(),
        line,
        msg: format!("expected an integer, found '{s}'"),
    })
}

/// Loads a dataset in the TUDataset text layout from `dir`.
///
/// Node labels, when present, are one-hot encoded over their sorted distinct
/// values; otherwise every node gets the constant feature 1.0. Graph labels
/// are remapped to `0..classes` by sorted order.
pub fn load_tudataset(dir: &Path, name: &str) -> Result<Vec<Graph>> {
    let indicator = read_lines(dir, name, "graph_indicator")?.expect("required file");
    let graph_labels = read_lines(dir, name, "graph_labels")?.expect("required file");
    let adjacency = read_lines(dir, name, "A")?.expect("required file");
    let node_labels = read_lines(dir, name, "node_labels")?;

    let num_graphs = graph_labels.rows.len();
    let mut node_graph = Vec::with_capacity(indicator.rows.len());
    for (line, s) in &indicator.rows {
        let g = parse_int(&indicator, *line, s)?;
        if g < 1 || g as usize > num_graphs {
            return Err(Error::Format {
                file: indicator.file.clone(),
                line: *line,
                msg: format!("graph id {g} outside 1..={num_graphs}"),
            });
        }
        node_graph.push(g as usize - 1);
    }
    let total_nodes = node_graph.len();
    if node_graph.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Format {
            file: indicator.file.clone(),
            line: 0,
            msg: "graph ids must be non-decreasing".into(),
        });
    }
    let mut offset = vec![usize::MAX; num_graphs];
    let mut sizes = vec![0usize; num_graphs];
    for (v, &g) in node_graph.iter().enumerate() {
        if offset[g] == usize::MAX {
            offset[g] = v;
        }
        sizes[g] += 1;
    }

    let raw_labels: Vec<i64> = graph_labels
        .rows
        .iter()
        .map(|(line, s)| parse_int(&graph_labels, *line, s))
        .collect::<Result<_>>()?;
    let label_values: Vec<i64> = raw_labels
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let features: Vec<Vec<f64>> = match &node_labels {
        Some(nl) => {
            if nl.rows.len() != total_nodes {
                return Err(Error::Format {
                    file: nl.file.clone(),
                    line: nl.rows.last().map_or(0, |r| r.0),
                    msg: format!("{} node labels for {total_nodes} nodes", nl.rows.len()),
                });
            }
            let vals: Vec<i64> = nl
                .rows
                .iter()
                .map(|(line, s)| parse_int(nl, *line, s))
                .collect::<Result<_>>()?;
            let distinct: Vec<i64> = vals.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
            vals.iter()
                .map(|v| {
                    let mut row = vec![0.0; distinct.len()];
                    row[distinct.binary_search(v).unwrap()] = 1.0;
                    row
                })
                .collect()
        }
        None => vec![vec![1.0]; total_nodes],
    };

    let mut edges: Vec<Vec<[usize; 2]>> = vec![Vec::new(); num_graphs];
    for (line, s) in &adjacency.rows {
        let mut parts = s.split(',');
        let (a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(Error::Format {
                    file: adjacency.file.clone(),
                    line: *line,
                    msg: format!("expected 'i, j', found '{s}'"),
                })
            }
        };
        let (a, b) = (parse_int(&adjacency, *line, a)?, parse_int(&adjacency, *line, b)?);
        for v in [a, b] {
            if v < 1 || v as usize > total_nodes {
                return Err(Error::Format {
                    file: adjacency.file.clone(),
                    line: *line,
                    msg: format!("node {v} outside 1..={total_nodes}"),
                });
            }
        }
        let (a, b) = (a as usize - 1, b as usize - 1);
        let g = node_graph[a];
        if node_graph[b] != g {
            return Err(Error::Format {
                file: adjacency.file.clone(),
                line: *line,
                msg: format!("edge ({}, {}) crosses graphs", a + 1, b + 1),
            });
        }
        if a != b {
            edges[g].push([a - offset[g], b - offset[g]]);
        }
    }

    (0..num_graphs)
        .map(|g| {
            let n = sizes[g];
            let feats = if n == 0 {
                Vec::new()
            } else {
                features[offset[g]..offset[g] + n].to_vec()
            };
            let label = label_values.binary_search(&raw_labels[g]).unwrap();
            Graph::new(n, &edges[g], feats, label)
        })
        .collect()
}

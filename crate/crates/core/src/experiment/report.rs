use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::evaluate::EvalReport;
use crate::error::{Error, Result};
use crate::metrics::summarize;

/// Placeholder for a metric no run reported.
pub const GAP: &str = "n/a";

const DATASET_ORDER: [&str; 6] = [
    "grid",
    "grid_house",
    "stars",
    "house_colour",
    "mutagenicity",
    "reddit_binary",
];
const ALL_MODELS: [&str; 3] = ["scn", "cgn_mean", "cgn_diffpool"];
const CLUSTER_MODELS: [&str; 2] = ["scn", "cgn_diffpool"];

/// Values of every metric, grouped by (dataset, model).
struct Collected {
    values: BTreeMap<(String, String), BTreeMap<String, Vec<f64>>>,
    datasets: Vec<String>,
}

impl Collected {
    fn new(reports: &[EvalReport]) -> Self {
        let mut values: BTreeMap<(String, String), BTreeMap<String, Vec<f64>>> = BTreeMap::new();
        let mut sorted: Vec<&EvalReport> = reports.iter().collect();
        sorted.sort_by(|a, b| (&a.dataset, &a.model, a.seed).cmp(&(&b.dataset, &b.model, b.seed)));
        for r in sorted {
            let entry = values.entry((r.dataset.clone(), r.model.clone())).or_default();
            for (k, v) in &r.metrics {
                entry.entry(k.clone()).or_default().push(*v);
            }
        }
        let mut datasets: Vec<String> = values.keys().map(|(d, _)| d.clone()).collect();
        datasets.dedup();
        datasets.sort_by_key(|d| {
            let pos = DATASET_ORDER.iter().position(|o| o == d).unwrap_or(DATASET_ORDER.len());
            (pos, d.clone())
        });
        Self { values, datasets }
    }

    fn cell(&self, dataset: &str, model: &str, metric: &str, range: (f64, f64)) -> String {
        self.values
            .get(&(dataset.to_string(), model.to_string()))
            .and_then(|m| m.get(metric))
            .and_then(|v| summarize(v, range).ok())
            .map_or_else(|| GAP.to_string(), |i| i.cell())
    }

    fn clusters(&self, dataset: &str, model: &str) -> usize {
        self.values
            .get(&(dataset.to_string(), model.to_string()))
            .map_or(0, |m| {
                m.keys()
                    .filter_map(|k| k.strip_prefix("conditional_strength_")?.strip_suffix("_test"))
                    .filter_map(|k| k.parse::<usize>().ok())
                    .max()
                    .unwrap_or(0)
            })
    }
}

fn header(out: &mut String, title: &str, cols: &[&str]) {
    let _ = writeln!(out, "## {title}\n");
    let _ = writeln!(out, "| {} |", cols.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(cols.len()));
}

fn model_table(out: &mut String, c: &Collected, title: &str, metric: &str, models: &[&str], range: (f64, f64)) {
    let mut cols = vec!["Dataset"];
    cols.extend(models);
    header(out, title, &cols);
    for d in &c.datasets {
        let cells: Vec<String> = models.iter().map(|m| c.cell(d, m, metric, range)).collect();
        let _ = writeln!(out, "| {d} | {} |", cells.join(" | "));
    }
    out.push('\n');
}

/// Markdown tables over evaluated runs. Missing metrics render
/// as [`GAP`]; a single seed renders a zero-width interval.
pub fn render_report(reports: &[EvalReport]) -> String {
    let c = Collected::new(reports);
    let pct = (0.0, 100.0);
    let unit = (0.0, 1.0);
    let mut out = String::from("# Results\n\nCells read `mean (low, high)` over seeds with a 95% interval.\n\n");
    model_table(&mut out, &c, "Test accuracy (%)", "accuracy_test", &ALL_MODELS, pct);

    header(
        &mut out,
        "Subgraph concept completeness (%)",
        &["Dataset", "Model", "individual", "concat", "concat_with_importance"],
    );
    for d in &c.datasets {
        for m in CLUSTER_MODELS {
            let cells: Vec<String> = ["individual", "concat", "concat_with_importance"]
                .iter()
                .map(|v| c.cell(d, m, &format!("completeness_subgraph_{v}"), pct))
                .collect();
            let _ = writeln!(out, "| {d} | {m} | {} |", cells.join(" | "));
        }
    }
    out.push('\n');

    header(
        &mut out,
        "Node and graph concept completeness (%)",
        &["Dataset", "Model", "node_graph_space", "node_subgraph_space", "graph"],
    );
    for d in &c.datasets {
        for m in ALL_MODELS {
            let cells: Vec<String> = ["node_graph_space", "node_subgraph_space", "graph"]
                .iter()
                .map(|v| c.cell(d, m, &format!("completeness_{v}"), pct))
                .collect();
            let _ = writeln!(out, "| {d} | {m} | {} |", cells.join(" | "));
        }
    }
    out.push('\n');

    model_table(
        &mut out,
        &c,
        "Cluster utilisation (test)",
        "utilisation_test",
        &CLUSTER_MODELS,
        unit,
    );
    model_table(
        &mut out,
        &c,
        "Subgraph assignment strength (test)",
        "assignment_strength_test",
        &CLUSTER_MODELS,
        unit,
    );
    model_table(
        &mut out,
        &c,
        "Subgraph consistency (test)",
        "consistency_test",
        &CLUSTER_MODELS,
        unit,
    );

    header(
        &mut out,
        "Conditional assignment strength per cluster (test)",
        &["Dataset", "Model", "Cluster", "Strength"],
    );
    for d in &c.datasets {
        for m in CLUSTER_MODELS {
            for k in 1..=c.clusters(d, m) {
                let cell = c.cell(d, m, &format!("conditional_strength_{k}_test"), unit);
                let _ = writeln!(out, "| {d} | {m} | {k} | {cell} |");
            }
        }
    }
    out
}

/// Finds `metrics.json` files under each root (the root itself, or any
/// directory below it), sorted by path.
pub fn find_metrics(roots: &[PathBuf]) -> Result<Vec<PathBuf>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        let candidate = dir.join("metrics.json");
        if candidate.is_file() {
            out.push(candidate);
        }
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut subdirs: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        subdirs.sort();
        for s in subdirs {
            walk(&s, out)?;
        }
        Ok(())
    }
    let mut out = Vec::new();
    for r in roots {
        walk(r, &mut out)?;
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// Finds run directories (those holding a `manifest.json`) under each root.
pub fn find_runs(roots: &[PathBuf]) -> Result<Vec<PathBuf>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        if dir.join("manifest.json").is_file() {
            out.push(dir.to_path_buf());
            return Ok(());
        }
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for e in entries.filter_map(|e| e.ok()) {
            if e.path().is_dir() {
                walk(&e.path(), out)?;
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    for r in roots {
        walk(r, &mut out)?;
    }
    out.sort();
    out.dedup();
    Ok(out)
}

pub fn report_from_dirs(roots: &[PathBuf]) -> Result<String> {
    let files = find_metrics(roots)?;
    if files.is_empty() {
        return Err(Error::Config("no metrics.json found; run evaluate first".into()));
    }
    let reports = files.iter().map(|f| EvalReport::load(f)).collect::<Result<Vec<_>>>()?;
    Ok(render_report(&reports))
}

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Graph;
use crate::error::{Error, Result};

/// Summary statistics written next to every dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub count: usize,
    pub mean_size: f64,
    pub feature_width: usize,
    pub classes: usize,
}

impl DatasetStats {
    pub fn of(graphs: &[Graph]) -> Self {
        let total: usize = graphs.iter().map(|g| g.n).sum();
        Self {
            count: graphs.len(),
            mean_size: if graphs.is_empty() {
                0.0
            } else {
                total as f64 / graphs.len() as f64
            },
            feature_width: graphs.first().map_or(0, Graph::feature_dim),
            classes: super::num_classes(graphs),
        }
    }
}

/// Writes one JSON record per line and a `<file>.stats.json` sidecar.
pub fn write_jsonl(path: &Path, graphs: &[Graph]) -> Result<DatasetStats> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for g in graphs {
        serde_json::to_writer(&mut w, g)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let stats = DatasetStats::of(graphs);
    let sidecar = stats_path(path);
    fs::write(&sidecar, serde_json::to_string_pretty(&stats)?).map_err(|e| Error::io(&sidecar, e))?;
    Ok(stats)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Graph>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut graphs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fmt = |msg: String| Error::Format {
            file: path.display().to_string(),
            line: i + 1,
            msg,
        };
        let g: Graph = serde_json::from_str(&line).map_err(|e| fmt(e.to_string()))?;
        g.validate().map_err(|e| fmt(e.to_string()))?;
        graphs.push(g);
    }
    Ok(graphs)
}

fn stats_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".stats.json");
    path.with_file_name(name)
}

/// SHA-256 of the serialized dataset, hex encoded.
pub fn dataset_hash(graphs: &[Graph]) -> Result<String> {
    let mut h = Sha256::new();
    for g in graphs {
        h.update(serde_json::to_vec(g)?);
        h.update(b"\n");
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

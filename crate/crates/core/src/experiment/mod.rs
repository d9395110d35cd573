//! Experiment orchestration behind the `scn` binary.

mod config;
mod evaluate;
mod model;
mod report;
mod train;

use std::fs;
use std::path::{Path, PathBuf};

pub use config::{parse_seed_list, preset_for, ConfigFile, ModelKind, Preset, RunConfig, DEFAULT_SEEDS};
pub use evaluate::{
    batch_concepts, collect_concepts, evaluate_runs, evaluate_split, explain_run, load_run, metrics_csv, EvalReport,
    LoadedRun,
};
pub use model::AnyModel;
pub use report::{find_metrics, find_runs, render_report, report_from_dirs, GAP};
pub use train::{
    accuracy, check_compatible, make_batches, train_all, train_seed, write_run, RunManifest, TrainOutcome, EVAL_BATCH,
};

use crate::error::{Error, Result};
use crate::graphdata::{build_dataset, load_tudataset, read_jsonl, Graph};

/// Loads or generates the configured dataset.
///
/// A directory in `data_path` is read as a TU dataset named after the
/// directory; a file is read as JSON lines.
pub fn load_dataset(cfg: &RunConfig) -> Result<Vec<Graph>> {
    match (&cfg.data_path, &cfg.data) {
        (Some(p), _) if p.is_dir() => {
            let name = p
                .file_name()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::Config(format!("bad dataset directory {}", p.display())))?;
            load_tudataset(p, name)
        }
        (Some(p), _) => read_jsonl(p),
        (None, Some(spec)) => build_dataset(spec),
        (None, None) => Err(Error::Config("no dataset source configured".into())),
    }
}

pub fn run_dir(cfg: &RunConfig, seed: u64) -> PathBuf {
    cfg.out
        .join(format!("{}_{}", cfg.dataset, cfg.model.as_str()))
        .join(format!("seed_{seed}"))
}

/// Writes through a sibling temporary file and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

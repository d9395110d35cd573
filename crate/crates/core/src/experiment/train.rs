use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::model::AnyModel;
use super::{load_dataset, run_dir, write_atomic};
use crate::baselines::cgn_loss;
use crate::error::{Error, Result};
use crate::graphdata::{dataset_hash, num_classes, pad_batch, split, Graph, PaddedBatch};
use crate::losses::{scn_loss, LossBreakdown};
use crate::ndiff::{Adam, Tape};

/// Graphs per evaluation batch.
pub const EVAL_BATCH: usize = 128;

/// Record of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub seed: u64,
    pub dataset_hash: String,
    pub train_size: usize,
    pub test_size: usize,
    /// Epoch-averaged loss terms, one entry per epoch.
    pub losses: Vec<LossBreakdown>,
    pub test_accuracy: Vec<f64>,
    /// Epoch whose weights were checkpointed (highest test accuracy, latest on ties).
    pub best_epoch: usize,
    pub train_accuracy_best: f64,
    pub test_accuracy_best: f64,
    pub checkpoint: String,
    pub wall_clock_secs: f64,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

pub struct TrainOutcome {
    pub manifest: RunManifest,
    pub model: AnyModel,
    pub dir: PathBuf,
}

/// Splits `indices` into padded batches of at most `size` graphs.
pub fn make_batches(graphs: &[Graph], indices: &[usize], size: usize) -> Result<Vec<PaddedBatch>> {
    indices
        .chunks(size)
        .map(|chunk| {
            let refs: Vec<&Graph> = chunk.iter().map(|&i| &graphs[i]).collect();
            pad_batch(&refs, None)
        })
        .collect()
}

pub fn accuracy(model: &AnyModel, batches: &[PaddedBatch]) -> Result<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for b in batches {
        let pred = model.predict(b)?;
        hit += pred.iter().zip(&b.labels).filter(|(p, l)| p == l).count();
        total += b.labels.len();
    }
    Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
}

/// One optimisation step; returns the batch loss terms.
fn step(
    model: &mut AnyModel,
    cfg: &RunConfig,
    adam: &mut Adam,
    batch: &PaddedBatch,
    rng: &mut ChaCha8Rng,
) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let (root, breakdown, norm) = match model {
        AnyModel::Scn(m) => {
            let out = m.forward(&mut tape, batch, true)?;
            let terms = scn_loss(&mut tape, &out, &batch.nodes, &batch.labels, &cfg.loss, rng)?;
            (terms.total, terms.breakdown(&tape), Some(out.norm_updates))
        }
        AnyModel::Cgn(m) => {
            let out = m.forward(&mut tape, batch)?;
            let (total, ce) = cgn_loss(&mut tape, &m.config, &out, &batch.labels)?;
            let mut b = LossBreakdown {
                total: tape.value(total).item(),
                cross_entropy: tape.value(ce).item(),
                ..Default::default()
            };
            if let Some(dp) = &out.diffpool {
                b.entropy = tape.value(dp.entropy_loss).item();
                b.connectivity = tape.value(dp.link_loss).item();
            }
            (total, b, None)
        }
    };
    if !breakdown.total.is_finite() {
        return Err(Error::Numeric(format!("loss is {}", breakdown.total)));
    }
    let store = model.store_mut();
    store.zero_grad();
    tape.backward_params(root, store)?;
    if !store.grads_finite() {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    adam.step(store)?;
    if let (AnyModel::Scn(m), Some(u)) = (model, norm) {
        m.apply_norm_updates(&u);
    }
    Ok(breakdown)
}

/// Trains one seed in memory; `log_every` > 0 prints progress to stderr.
pub fn train_seed(cfg: &RunConfig, graphs: &[Graph], seed: u64, log_every: usize) -> Result<(RunManifest, AnyModel)> {
    let start = Instant::now();
    let features = graphs.first().map(Graph::feature_dim).unwrap_or(0);
    let classes = num_classes(graphs);
    let sp = split(graphs, cfg.train_fraction, seed)?;
    let mut model = AnyModel::new(cfg, features, classes, seed)?;
    let test_batches = make_batches(graphs, &sp.test, EVAL_BATCH)?;
    let mut adam = Adam::new(cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut order = sp.train.clone();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut test_accuracy = Vec::with_capacity(cfg.epochs);
    let mut best = (0usize, f64::NEG_INFINITY, model.clone());

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossBreakdown::default();
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&Graph> = chunk.iter().map(|&i| &graphs[i]).collect();
            let batch = pad_batch(&refs, None)?;
            let b = step(&mut model, cfg, &mut adam, &batch, &mut rng).map_err(|e| annotate(e, epoch))?;
            sum.accumulate(&b, chunk.len() as f64 / order.len() as f64);
        }
        let acc = accuracy(&model, &test_batches)?;
        if acc >= best.1 {
            best = (epoch, acc, model.clone());
        }
        if log_every > 0 && (epoch + 1) % log_every == 0 {
            eprintln!(
                "seed {seed} epoch {:>4} loss {:.4} ce {:.4} test {:.4}",
                epoch + 1,
                sum.total,
                sum.cross_entropy,
                acc
            );
        }
        losses.push(sum);
        test_accuracy.push(acc);
    }

    let (best_epoch, test_best, best_model) = best;
    let train_batches = make_batches(graphs, &sp.train, EVAL_BATCH)?;
    let manifest = RunManifest {
        config: cfg.clone(),
        seed,
        dataset_hash: dataset_hash(graphs)?,
        train_size: sp.train.len(),
        test_size: sp.test.len(),
        losses,
        test_accuracy,
        best_epoch,
        train_accuracy_best: accuracy(&best_model, &train_batches)?,
        test_accuracy_best: test_best,
        checkpoint: "checkpoint.json".into(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok((manifest, best_model))
}

fn annotate(e: Error, epoch: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("epoch {}: {msg}", epoch + 1)),
        other => other,
    }
}

/// Trains every configured seed and writes checkpoint, manifest and loss
/// log under `<out>/<dataset>_<model>/seed_<seed>/`.
pub fn train_all(cfg: &RunConfig, log_every: usize) -> Result<Vec<TrainOutcome>> {
    let graphs = load_dataset(cfg)?;
    check_compatible(cfg, &graphs)?;
    let mut outcomes = Vec::new();
    for &seed in &cfg.seeds {
        let (manifest, model) = train_seed(cfg, &graphs, seed, log_every)?;
        let dir = run_dir(cfg, seed);
        write_run(&dir, &manifest, &model)?;
        outcomes.push(TrainOutcome { manifest, model, dir });
    }
    Ok(outcomes)
}

/// Rejects datasets whose feature width disagrees with an explicit spec.
pub fn check_compatible(cfg: &RunConfig, graphs: &[Graph]) -> Result<()> {
    if graphs.is_empty() {
        return Err(Error::Param("dataset is empty".into()));
    }
    let width = graphs[0].feature_dim();
    if let Some(g) = graphs.iter().find(|g| g.feature_dim() != width) {
        return Err(Error::Config(format!(
            "ragged features: {} vs {width}",
            g.feature_dim()
        )));
    }
    if let Some(spec) = &cfg.data {
        if spec.feature_dim() != width {
            return Err(Error::Config(format!(
                "dataset '{}' has feature width {width}, config expects {}",
                cfg.dataset,
                spec.feature_dim()
            )));
        }
    }
    Ok(())
}

pub fn write_run(dir: &Path, manifest: &RunManifest, model: &AnyModel) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    model.save(&dir.join(&manifest.checkpoint))?;
    let mut csv = String::from(LossBreakdown::CSV_HEADER);
    csv.push_str(",test_accuracy\n");
    for (i, (l, a)) in manifest.losses.iter().zip(&manifest.test_accuracy).enumerate() {
        csv.push_str(&format!("{},{a}\n", l.csv_row(i + 1)));
    }
    write_atomic(&dir.join("losses.csv"), csv.as_bytes())?;
    let json = serde_json::to_string_pretty(manifest)?;
    write_atomic(&dir.join("manifest.json"), json.as_bytes())
}

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{CgnConfig, CgnVariant};
use crate::error::{Error, Result};
use crate::graphdata::{DatasetName, DatasetSpec};
use crate::losses::LossWeights;
use crate::scn::ScnConfig;

pub const DEFAULT_SEEDS: [u64; 5] = [42, 76, 58, 92, 19];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Scn,
    CgnMean,
    CgnDiffpool,
}

impl ModelKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "scn" => Ok(Self::Scn),
            "cgn_mean" | "cgn" => Ok(Self::CgnMean),
            "cgn_diffpool" | "diffpool" => Ok(Self::CgnDiffpool),
            other => Err(Error::Config(format!("unknown model '{other}'"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Scn => "scn",
            Self::CgnMean => "cgn_mean",
            Self::CgnDiffpool => "cgn_diffpool",
        }
    }
}

/// Architecture and optimisation settings of one dataset row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub layers: usize,
    pub hidden: usize,
    pub s: usize,
    pub k: usize,
    pub s_sub: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

const fn preset(layers: usize, hidden: usize, s: usize, k: usize, s_sub: usize, epochs: usize) -> Preset {
    Preset {
        layers,
        hidden,
        s,
        k,
        s_sub,
        lr: 0.001,
        batch_size: 16,
        epochs,
    }
}

/// Reference per-dataset settings; `None` for unknown names.
pub fn preset_for(dataset: &str) -> Option<Preset> {
    let key = dataset.to_ascii_lowercase().replace('-', "_");
    Some(match key.as_str() {
        "grid" => preset(5, 20, 10, 2, 8, 300),
        "grid_house" => preset(4, 20, 10, 4, 10, 2000),
        "stars" => preset(2, 10, 4, 2, 4, 300),
        "house_colour" | "house_color" => preset(2, 10, 10, 4, 8, 300),
        "mutagenicity" => preset(3, 40, 10, 10, 10, 1000),
        "reddit_binary" => preset(3, 32, 10, 10, 10, 1000),
        _ => return None,
    })
}

/// Fully resolved run settings.
///
/// Synthetic datasets carry their generator spec in `data`; real datasets
/// name a TU directory or JSON-lines file in `data_path`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: String,
    pub data: Option<DatasetSpec>,
    pub data_path: Option<PathBuf>,
    pub model: ModelKind,
    pub layers: usize,
    pub hidden: usize,
    pub s: usize,
    pub k: usize,
    pub s_sub: usize,
    pub loss: LossWeights,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seeds: Vec<u64>,
    pub train_fraction: f64,
    pub out: PathBuf,
}

/// On-disk configuration document. Every field is optional and falls back
/// to the dataset preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub dataset: Option<String>,
    pub data: Option<DatasetSpec>,
    pub data_seed: Option<u64>,
    pub data_count: Option<usize>,
    pub data_path: Option<PathBuf>,
    pub model: Option<ModelKind>,
    pub layers: Option<usize>,
    pub hidden: Option<usize>,
    pub s: Option<usize>,
    pub k: Option<usize>,
    pub s_sub: Option<usize>,
    pub loss: Option<LossWeights>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub seeds: Option<Vec<u64>>,
    pub train_fraction: Option<f64>,
    pub out: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Fields set in `other` win.
    pub fn merge(mut self, other: ConfigFile) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            dataset,
            data,
            data_seed,
            data_count,
            data_path,
            model,
            layers,
            hidden,
            s,
            k,
            s_sub,
            loss,
            epochs,
            batch_size,
            lr,
            seeds,
            train_fraction,
            out
        );
        self
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let dataset = self
            .dataset
            .clone()
            .ok_or_else(|| Error::Config("no dataset given".into()))?;
        let p = preset_for(&dataset).ok_or_else(|| Error::Config(format!("unknown dataset '{dataset}'")))?;
        let data = match DatasetName::parse(&dataset) {
            Ok(name) => {
                let mut spec = self.data.clone().unwrap_or_else(|| DatasetSpec::default_for(name, 0));
                if self.data.is_some() && spec.name != name {
                    return Err(Error::Config(format!(
                        "data spec is for '{}', dataset is '{dataset}'",
                        spec.name.as_str()
                    )));
                }
                if let Some(seed) = self.data_seed {
                    spec.seed = seed;
                }
                if let Some(count) = self.data_count {
                    spec.count = count;
                }
                Some(spec)
            }
            Err(_) => None,
        };
        if data.is_none() && self.data_path.is_none() {
            return Err(Error::Config(format!(
                "dataset '{dataset}' is not synthetic; set data_path"
            )));
        }
        let cfg = RunConfig {
            dataset: dataset.to_ascii_lowercase().replace('-', "_"),
            data,
            data_path: self.data_path.clone(),
            model: self.model.unwrap_or(ModelKind::Scn),
            layers: self.layers.unwrap_or(p.layers),
            hidden: self.hidden.unwrap_or(p.hidden),
            s: self.s.unwrap_or(p.s),
            k: self.k.unwrap_or(p.k),
            s_sub: self.s_sub.unwrap_or(p.s_sub),
            loss: self.loss.clone().unwrap_or_default(),
            epochs: self.epochs.unwrap_or(p.epochs),
            batch_size: self.batch_size.unwrap_or(p.batch_size),
            lr: self.lr.unwrap_or(p.lr),
            seeds: self.seeds.clone().unwrap_or_else(|| DEFAULT_SEEDS.to_vec()),
            train_fraction: self.train_fraction.unwrap_or(0.8),
            out: self.out.clone().unwrap_or_else(|| PathBuf::from("runs")),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    /// Preset configuration for a dataset.
    pub fn for_dataset(dataset: &str, model: ModelKind) -> Result<Self> {
        ConfigFile {
            dataset: Some(dataset.into()),
            model: Some(model),
            ..Default::default()
        }
        .resolve()
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must be in (0, 1)".into()));
        }
        self.loss.validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn scn_config(&self, features: usize, classes: usize) -> ScnConfig {
        ScnConfig {
            layers: self.layers,
            hidden: self.hidden,
            s: self.s,
            k: self.k,
            s_sub: self.s_sub,
            features,
            classes,
            eps: 1e-8,
        }
    }

    pub fn cgn_config(&self, features: usize, classes: usize) -> CgnConfig {
        let variant = match self.model {
            ModelKind::CgnDiffpool => CgnVariant::DiffPool,
            _ => CgnVariant::MeanPool,
        };
        CgnConfig {
            variant,
            layers: self.layers,
            hidden: self.hidden,
            s: self.s,
            k: self.k,
            features,
            classes,
            link_weight: 0.1,
            entropy_weight: 0.1,
        }
    }
}

/// Comma separated seed list.
pub fn parse_seed_list(text: &str) -> Result<Vec<u64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u64>().map_err(|_| Error::Config(format!("bad seed '{s}'"))))
        .collect::<Result<Vec<_>>>()
        .and_then(|v| {
            if v.is_empty() {
                Err(Error::Config("seed list is empty".into()))
            } else {
                Ok(v)
            }
        })
}

use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::config::{ModelKind, RunConfig};
use crate::baselines::{CgnModel, CgnVariant};
use crate::error::{Error, Result};
use crate::graphdata::PaddedBatch;
use crate::ndiff::ParamStore;
use crate::scn::ScnModel;

/// Any trainable classifier of the experiment runner.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Scn(ScnModel),
    Cgn(CgnModel),
}

#[derive(Deserialize)]
struct Tag {
    model: String,
}

impl AnyModel {
    pub fn new(cfg: &RunConfig, features: usize, classes: usize, seed: u64) -> Result<Self> {
        let built = match cfg.model {
            ModelKind::Scn => ScnModel::new(cfg.scn_config(features, classes), seed).map(Self::Scn),
            _ => CgnModel::new(cfg.cgn_config(features, classes), seed).map(Self::Cgn),
        };
        built.map_err(|e| Error::Config(e.to_string()))
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Scn(_) => ModelKind::Scn,
            Self::Cgn(m) => match m.config.variant {
                CgnVariant::MeanPool => ModelKind::CgnMean,
                CgnVariant::DiffPool => ModelKind::CgnDiffpool,
            },
        }
    }

    pub fn features(&self) -> usize {
        match self {
            Self::Scn(m) => m.config.features,
            Self::Cgn(m) => m.config.features,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Self::Scn(m) => m.config.classes,
            Self::Cgn(m) => m.config.classes,
        }
    }

    pub fn store(&self) -> &ParamStore {
        match self {
            Self::Scn(m) => &m.store,
            Self::Cgn(m) => &m.store,
        }
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        match self {
            Self::Scn(m) => &mut m.store,
            Self::Cgn(m) => &mut m.store,
        }
    }

    pub fn predict(&self, batch: &PaddedBatch) -> Result<Vec<usize>> {
        match self {
            Self::Scn(m) => m.predict(batch),
            Self::Cgn(m) => m.predict(batch),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        match self {
            Self::Scn(m) => m.to_json(),
            Self::Cgn(m) => m.to_json(),
        }
    }

    /// Dispatches on the checkpoint's `model` tag.
    pub fn from_json(text: &str) -> Result<Self> {
        let tag: Tag = serde_json::from_str(text)?;
        match tag.model.as_str() {
            "scn" => ScnModel::from_json(text).map(Self::Scn),
            "cgn_mean" | "cgn_diffpool" => CgnModel::from_json(text).map(Self::Cgn),
            other => Err(Error::Config(format!("unknown checkpoint model '{other}'"))),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::write_atomic(path, self.to_json()?.as_bytes())
    }
}

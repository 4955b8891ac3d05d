//! Self-describing JSON checkpoint: format tag, version, the model's
//! feature names, the standardization fitted on its training fold, and the
//! model itself. Floats are written with shortest round-trip formatting and
//! parsed exactly, so a reload is bit-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boosting::{gbm_predict_proba, GbmModel};
use crate::dataio::StandardizationStats;
use crate::error::{Error, Result};
use crate::nnmodels::{predict_proba, TrainedModel};
use crate::tensor::Tensor;

use super::config::ModelName;

pub const CHECKPOINT_FORMAT: &str = "parkvoice-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FittedModel {
    Neural(TrainedModel),
    Gbm(GbmModel),
}

impl FittedModel {
    /// Probabilities for already standardized features.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        match self {
            FittedModel::Neural(m) => predict_proba(m, x),
            FittedModel::Gbm(m) => gbm_predict_proba(m, x),
        }
    }

    /// Per-epoch mean training loss, or per-stage training MSE (stage 0
    /// first) for boosting.
    pub fn loss_curve(&self) -> &[f64] {
        match self {
            FittedModel::Neural(m) => &m.training_loss_curve,
            FittedModel::Gbm(m) => &m.stage_mse_curve,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model_name: ModelName,
    pub feature_names: Vec<String>,
    pub standardization: StandardizationStats,
    pub model: FittedModel,
}

impl Checkpoint {
    pub fn new(
        model_name: ModelName,
        feature_names: Vec<String>,
        standardization: StandardizationStats,
        model: FittedModel,
    ) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            model_name,
            feature_names,
            standardization,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unexpected format tag `{}`",
                ck.format
            )));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        if ck.standardization.mean.len() != ck.feature_names.len() {
            return Err(Error::Checkpoint(
                "standardization width does not match feature names".into(),
            ));
        }
        Ok(ck)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Standardizes raw features with the stored statistics, then predicts.
    pub fn predict_raw(&self, x: &Tensor) -> Result<Vec<f64>> {
        let z = self.standardization.apply_matrix(x)?;
        self.model.predict(&z)
    }
}

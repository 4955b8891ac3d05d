use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::boosting::GbmConfig;
use crate::error::{Error, Result};
use crate::nnmodels::{AttentiveConfig, MlpConfig, ModelConfig, SaintConfig, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelName {
    Mlp,
    Gbm,
    Attentive,
    Saint,
}

impl ModelName {
    pub const ALL: [ModelName; 4] = [
        ModelName::Mlp,
        ModelName::Gbm,
        ModelName::Attentive,
        ModelName::Saint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Mlp => "mlp",
            ModelName::Gbm => "gbm",
            ModelName::Attentive => "attentive",
            ModelName::Saint => "saint",
        }
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelName::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown model `{s}` (expected mlp, gbm, attentive or saint)"
                ))
            })
    }
}

/// Parses a comma-separated model list such as `mlp,saint`.
pub fn parse_model_list(s: &str) -> Result<Vec<ModelName>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Everything a run needs. Every field has a default, so an empty config
/// file plus a data path reproduces the reference protocol. `train.seed` is
/// always replaced by the root `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    pub test_fraction: f64,
    pub models_to_run: Vec<ModelName>,
    pub train: TrainConfig,
    pub mlp: MlpConfig,
    pub attentive: AttentiveConfig,
    pub saint: SaintConfig,
    pub gbm: GbmConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data_path: None,
            output_dir: None,
            seed: 42,
            test_fraction: 0.2,
            models_to_run: ModelName::ALL.to_vec(),
            train: TrainConfig::default(),
            mlp: MlpConfig::default(),
            attentive: AttentiveConfig::default(),
            saint: SaintConfig::default(),
            gbm: GbmConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.models_to_run.is_empty() {
            return Err(Error::Config("models_to_run is empty".into()));
        }
        let unique: BTreeSet<_> = self.models_to_run.iter().collect();
        if unique.len() != self.models_to_run.len() {
            return Err(Error::Config(format!(
                "models_to_run has duplicates: {:?}",
                self.models_to_run
            )));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction {} outside (0, 1)",
                self.test_fraction
            )));
        }
        self.train.validate()?;
        self.gbm.validate()?;
        for name in &self.models_to_run {
            if let Some(cfg) = self.model_config(*name) {
                cfg.validate()?;
            }
        }
        Ok(())
    }

    /// Requested models in canonical order (mlp, gbm, attentive, saint).
    pub fn models(&self) -> Vec<ModelName> {
        let set: BTreeSet<_> = self.models_to_run.iter().copied().collect();
        set.into_iter().collect()
    }

    /// Training settings with the root seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train
        }
    }

    /// Network configuration for the gradient-trained models; `None` for GBM.
    pub fn model_config(&self, name: ModelName) -> Option<ModelConfig> {
        match name {
            ModelName::Mlp => Some(ModelConfig::Mlp(self.mlp.clone())),
            ModelName::Attentive => Some(ModelConfig::Attentive(self.attentive)),
            ModelName::Saint => Some(ModelConfig::Saint(self.saint)),
            ModelName::Gbm => None,
        }
    }
}

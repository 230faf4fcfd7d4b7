use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aae::{AAETrainConfig, Architecture};
use crate::datasets::{OutlierConvention, OUTLIER_PERCENTAGES};
use crate::error::{Error, Result};
use crate::robust::RobustConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Source tag, e.g. `mnist` or `fashion-mnist`.
    pub name: String,
    /// Directory holding `{train,t10k}-{images-idx3,labels-idx1}-ubyte`.
    pub path: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { name: "mnist".into(), path: PathBuf::from("data/mnist") }
    }
}

/// Rotating k-fold protocol; when set, cells run over fold indices
/// `0..folds` instead of `seeds`, and the split shuffle uses `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossValidation {
    pub folds: usize,
    pub seed: u64,
}

impl Default for CrossValidation {
    fn default() -> Self {
        CrossValidation { folds: 5, seed: 0 }
    }
}

/// Full experiment description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub inlier_classes: Vec<u8>,
    pub outlier_percentages: Vec<u32>,
    pub outlier_convention: OutlierConvention,
    pub seeds: Vec<u64>,
    pub cross_validation: Option<CrossValidation>,
    /// Cap on training inliers per cell (taken from the front of the split).
    pub max_train: Option<usize>,
    /// Radii for the attack sweep; the clean result is always included.
    pub attack_epsilons: Vec<f64>,
    pub out_dir: PathBuf,
    pub architecture: Architecture,
    pub aae: AAETrainConfig,
    pub robust: RobustConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataConfig::default(),
            inlier_classes: vec![0],
            outlier_percentages: vec![50],
            outlier_convention: OutlierConvention::TotalSet,
            seeds: vec![0, 1, 2],
            cross_validation: None,
            max_train: None,
            attack_epsilons: vec![0.5, 1.0, 2.0],
            out_dir: PathBuf::from("results"),
            architecture: Architecture::default(),
            aae: AAETrainConfig::default(),
            robust: RobustConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.inlier_classes.is_empty() || self.outlier_percentages.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("inlier_classes, outlier_percentages and seeds must be nonempty".into()));
        }
        if let Some(&c) = self.inlier_classes.iter().find(|&&c| c > 9) {
            return Err(Error::Config(format!("inlier class {c} outside 0..=9")));
        }
        if let Some(p) = self.outlier_percentages.iter().find(|p| !OUTLIER_PERCENTAGES.contains(p)) {
            return Err(Error::Config(format!("outlier percentage {p} not in {OUTLIER_PERCENTAGES:?}")));
        }
        if self.attack_epsilons.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return Err(Error::Config("attack epsilons must be finite and >= 0".into()));
        }
        if let Some(cv) = &self.cross_validation {
            if cv.folds < 3 {
                return Err(Error::Config(format!("cross_validation.folds = {} must be >= 3", cv.folds)));
            }
        }
        if self.max_train == Some(0) {
            return Err(Error::Config("max_train must be >= 1".into()));
        }
        self.architecture.validate()?;
        self.aae.validate()?;
        self.robust.validate()
    }
}

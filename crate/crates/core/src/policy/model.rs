use std::path::Path;

use serde::{Deserialize, Serialize};

use super::svm::{rbf, HyperParams};
use super::{Action, FeatureMode, FeatureVector};
use crate::error::{Error, Result};

pub const POLICY_FORMAT_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub keep: f64,
    pub prune: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub num_samples: usize,
    pub num_keep: usize,
    pub num_prune: usize,
    pub iterations: u64,
    pub converged: bool,
}

/// Trained pruning classifier. Positive decision values mean Keep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyModel {
    pub version: String,
    pub mode: FeatureMode,
    pub hyper: HyperParams,
    pub class_weights: ClassWeights,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Standardized support vectors.
    pub support_vectors: Vec<Vec<f64>>,
    /// `y_i α_i` per support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
    /// Keep iff the decision value is at least this.
    pub threshold_shift: f64,
    pub meta: TrainingMeta,
}

impl PolicyModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub(crate) fn standardized(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn decision_value(&self, features: &FeatureVector) -> f64 {
        self.decision_raw(&features.input(self.mode))
    }

    pub fn decision_raw(&self, x: &[f64]) -> f64 {
        let z = self.standardized(x);
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, c)| c * rbf(self.hyper.gamma, sv, &z))
            .sum::<f64>()
            + self.bias
    }

    pub fn is_constant(&self) -> bool {
        self.support_vectors.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.mode.dim();
        if self.mean.len() != dim {
            return Err(Error::dimension("standardization mean", dim, self.mean.len()));
        }
        if self.scale.len() != dim {
            return Err(Error::dimension("standardization scale", dim, self.scale.len()));
        }
        if self.coefficients.len() != self.support_vectors.len() {
            return Err(Error::dimension(
                "dual coefficients",
                self.support_vectors.len(),
                self.coefficients.len(),
            ));
        }
        if let Some(sv) = self.support_vectors.iter().find(|sv| sv.len() != dim) {
            return Err(Error::dimension("support vector", dim, sv.len()));
        }
        let finite = self.mean.iter().chain(&self.coefficients).all(|v| v.is_finite())
            && self.scale.iter().all(|s| s.is_finite() && *s > 0.0)
            && self.support_vectors.iter().flatten().all(|v| v.is_finite())
            && self.bias.is_finite()
            && self.threshold_shift.is_finite();
        if !finite {
            return Err(Error::Config("policy model holds non-finite parameters".into()));
        }
        self.hyper.validate()
    }
}

/// Non-finite decision values fall back to Keep.
pub fn predict(model: &PolicyModel, features: &FeatureVector) -> Action {
    let d = model.decision_value(features);
    if !d.is_finite() || d >= model.threshold_shift {
        Action::Keep
    } else {
        Action::Prune
    }
}

pub fn save_policy(model: &PolicyModel, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(model)?)?;
    Ok(())
}

pub fn load_policy(path: &Path) -> Result<PolicyModel> {
    let load_err = |reason: String| Error::Load {
        path: path.to_path_buf(),
        reason,
    };
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| load_err(e.to_string()))?;
    match value.get("version").and_then(|v| v.as_str()) {
        Some(POLICY_FORMAT_VERSION) => {}
        Some(other) => return Err(load_err(format!("unsupported policy version {other:?}"))),
        None => return Err(load_err("missing policy version".into())),
    }
    let model: PolicyModel = serde_json::from_value(value).map_err(|e| load_err(e.to_string()))?;
    model.validate().map_err(|e| load_err(e.to_string()))?;
    Ok(model)
}

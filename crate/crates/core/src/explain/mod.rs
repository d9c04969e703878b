//! Feature attributions, local surrogates, global importance and
//! recommendations for any model exposed as a prediction function.

mod global;
mod lime;
mod recommend;
mod shapley;

pub use global::{global_importance, GlobalImportance, ImportanceConfig, ImportanceMethod, ImportanceMetric, RankedFeature};
pub use lime::{lime_explain, LimeConfig, LocalExplanation, Rule};
pub use recommend::{actionable_features, recommend, Direction, Recommendation};
pub use shapley::{
    shapley_brute_force, shapley_exact_linear, shapley_sampled, shapley_weight, Attribution, Contribution,
    ShapleyMethod, DEFAULT_MAX_FEATURES,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{FactorSchema, Scaling};
use crate::predictors::{Artifact, ModelError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplainError {
    #[error("{p} features exceed the brute-force limit of {max}")]
    TooManyFeatures { p: usize, max: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("all perturbations are identical")]
    DegenerateNeighborhood,
    #[error("empty data")]
    EmptyData,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Admissible values of one model input, in model (scaled) units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    Continuous { sd: f64, min: f64, max: f64 },
    /// Coded factor; `values[i]` is the scaled code of `labels[i]`.
    Levels { values: Vec<f64>, labels: Vec<String>, ordered: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDomain {
    pub name: String,
    pub kind: DomainKind,
    /// Maps raw values to model units.
    pub scaling: Scaling,
}

impl FeatureDomain {
    /// A raw-unit rendering of a model-unit value.
    pub fn describe(&self, v: f64) -> String {
        let raw = self.scaling.invert(v);
        match &self.kind {
            DomainKind::Levels { labels, .. } => {
                let i = raw.round().clamp(0.0, (labels.len() - 1) as f64) as usize;
                labels[i].clone()
            }
            DomainKind::Continuous { .. } => format!("{raw:.2}"),
        }
    }
}

/// Input domains for an artifact's features.
pub fn feature_domains(artifact: &Artifact, schema: &FactorSchema) -> Result<Vec<FeatureDomain>, ExplainError> {
    artifact
        .feature_names
        .iter()
        .zip(&artifact.scaling)
        .map(|(name, scaling)| {
            let spec = schema
                .get(name)
                .ok_or_else(|| ExplainError::InvalidConfig(format!("feature {name} not in schema")))?;
            let kind = if spec.kind.is_continuous() {
                let [lo, hi] = spec.range.unwrap_or([0.0, 1.0]);
                let sd = match scaling {
                    Scaling::Zscore { .. } => 1.0,
                    _ => (scaling.apply(hi) - scaling.apply(lo)).abs() / 4.0,
                };
                DomainKind::Continuous {
                    sd,
                    min: scaling.apply(lo).min(scaling.apply(hi)),
                    max: scaling.apply(lo).max(scaling.apply(hi)),
                }
            } else {
                DomainKind::Levels {
                    values: (0..spec.levels.len()).map(|i| scaling.apply(i as f64)).collect(),
                    labels: spec.levels.clone(),
                    ordered: spec.kind != crate::data::FactorKind::Categorical,
                }
            };
            Ok(FeatureDomain {
                name: name.clone(),
                kind,
                scaling: *scaling,
            })
        })
        .collect()
}

pub(crate) fn column_means(x: &DMatrix<f64>) -> Result<Vec<f64>, ExplainError> {
    if x.nrows() == 0 {
        return Err(ExplainError::EmptyData);
    }
    Ok(x.column_iter().map(|c| c.mean()).collect())
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<(), ExplainError> {
    if expected != got {
        return Err(ExplainError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Attribution of an artifact's output at scaled input `x`, relative to the
/// training background mean: exact for linear models, sampled otherwise.
pub fn artifact_attribution(
    artifact: &Artifact,
    x: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Attribution, ExplainError> {
    check_len(artifact.feature_names.len(), x.len())?;
    let bg = DMatrix::from_row_slice(1, x.len(), &artifact.background_mean);
    match &artifact.parameters {
        crate::predictors::FittedModel::Linear(m) => shapley_exact_linear(m, x, &bg, &artifact.feature_names),
        _ => {
            let f = |z: &[f64]| artifact.predict_scaled(z);
            shapley_sampled(&f, x, &bg, &artifact.feature_names, n_samples, seed)
        }
    }
}

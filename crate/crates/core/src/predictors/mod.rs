//! Regression and classification models of CGPA, evaluation metrics,
//! cross-validation and the versioned model artifact.

mod bands;
mod classify;
mod compare;
mod cv;
mod forest;
mod linear;
mod metrics;
mod pipeline;
mod tree;

pub use bands::{bin_cgpa, BandSpec, CgpaBand};
pub use classify::{
    fit_baseline_classifier, BaselineKind, ClassifierConfig, KnnModel, LogisticModel,
    RidgeClassifierModel,
};
pub use compare::{
    compare_models, default_suite, read_external_predictions, ClassificationRow, ComparisonReport,
    ExternalPredictions, RegressionRow,
};
pub use cv::{cross_validate, fit_spec, fold_indices, CvResult, FoldResult, ModelKind, ModelSpec, Standardizer};
pub use forest::{fit_forest, FeatureSubset, ForestConfig, ForestModel};
pub use linear::{fit_linear_family, fit_linear_weighted, kkt_violation, LinearModel, Penalty, SolverOptions};
pub use metrics::{
    classification_metrics, regression_metrics, ClassificationMetrics, ClassificationReport,
    MetricsReport, RegressionMetrics, RegressionReport,
};
pub use pipeline::{
    sha256_hex, train_pipeline, Artifact, EncodedInput, TrainConfig, TrainingMetadata, ARTIFACT_FORMAT_VERSION,
};
pub use tree::{fit_tree, TreeConfig, TreeModel, TreeNode};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DataError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("singular system")]
    SingularSystem,
    #[error("did not converge in {0} iterations")]
    NonConvergence(usize),
    #[error("empty data")]
    EmptyData,
    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("only one class present")]
    SingleClass,
    #[error("cgpa {0} outside [0, 4]")]
    OutOfRange(f64),
    #[error("too few rows: {n} for {k} folds")]
    TooFewRows { n: usize, k: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("validation failed: {0:?}")]
    ValidationFailed(Vec<String>),
    #[error("artifact: {0}")]
    Artifact(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

/// Any trained predictor. Classifiers return class indices as `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FittedModel {
    Linear(LinearModel),
    Tree(TreeModel),
    Forest(ForestModel),
    Logistic(LogisticModel),
    RidgeClassifier(RidgeClassifierModel),
    Knn(KnnModel),
}

impl FittedModel {
    pub fn task(&self) -> Task {
        match self {
            FittedModel::Linear(_) => Task::Regression,
            FittedModel::Tree(t) => t.task,
            FittedModel::Forest(f) => f.task,
            _ => Task::Classification,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            FittedModel::Linear(m) => m.weights.len(),
            FittedModel::Tree(m) => m.n_features,
            FittedModel::Forest(m) => m.n_features,
            FittedModel::Logistic(m) => m.n_features(),
            FittedModel::RidgeClassifier(m) => m.n_features(),
            FittedModel::Knn(m) => m.n_features(),
        }
    }

    /// Prediction for one feature vector. Panics on a length mismatch; use
    /// [`predict`] for checked batch prediction.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self {
            FittedModel::Linear(m) => m.predict_row(x),
            FittedModel::Tree(m) => m.predict_row(x),
            FittedModel::Forest(m) => m.predict_row(x),
            FittedModel::Logistic(m) => m.predict_row(x) as f64,
            FittedModel::RidgeClassifier(m) => m.predict_row(x) as f64,
            FittedModel::Knn(m) => m.predict_row(x) as f64,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            FittedModel::Linear(m) => m.penalty.name(),
            FittedModel::Tree(_) => "tree",
            FittedModel::Forest(_) => "forest",
            FittedModel::Logistic(_) => "logistic",
            FittedModel::RidgeClassifier(_) => "ridge_cls",
            FittedModel::Knn(_) => "knn",
        }
    }
}

/// Batch prediction over the rows of `x`.
pub fn predict(model: &FittedModel, x: &DMatrix<f64>) -> Result<Vec<f64>, ModelError> {
    if x.ncols() != model.n_features() {
        return Err(ModelError::DimensionMismatch {
            expected: model.n_features(),
            got: x.ncols(),
        });
    }
    let mut row = vec![0.0; x.ncols()];
    Ok((0..x.nrows())
        .map(|i| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = x[(i, j)];
            }
            model.predict_row(&row)
        })
        .collect())
}

/// Class count implied by labels `0..k`.
pub(crate) fn n_classes(y: &[f64]) -> usize {
    y.iter().map(|&v| v as usize + 1).max().unwrap_or(0)
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_prediction() {
        let m = FittedModel::Linear(LinearModel {
            weights: vec![2.0],
            intercept: 0.0,
            penalty: Penalty::None,
            excluded: vec![],
        });
        let x = DMatrix::from_row_slice(1, 1, &[3.0]);
        assert_eq!(predict(&m, &x).unwrap(), vec![6.0]);
        let bad = DMatrix::from_row_slice(1, 2, &[3.0, 1.0]);
        assert!(matches!(predict(&m, &bad), Err(ModelError::DimensionMismatch { .. })));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0]), 0);
    }
}

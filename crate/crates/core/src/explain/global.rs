use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_len, ExplainError};
use crate::predictors::{fit_tree, regression_metrics, Task, TreeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMethod {
    Permutation,
    TreeSurrogate,
}

/// Loss used by permutation importance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMetric {
    Mse,
    Accuracy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImportanceConfig {
    pub method: ImportanceMethod,
    pub metric: ImportanceMetric,
    pub n_repeats: usize,
    pub seed: u64,
    pub surrogate_depth: usize,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        Self {
            method: ImportanceMethod::Permutation,
            metric: ImportanceMetric::Mse,
            n_repeats: 10,
            seed: 0,
            surrogate_depth: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub feature: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalImportance {
    pub method: ImportanceMethod,
    /// Descending by score, ties by feature name.
    pub ranking: Vec<RankedFeature>,
    /// R² of the surrogate against the model (tree surrogate only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surrogate_fidelity: Option<f64>,
}

fn loss(metric: ImportanceMetric, y: &[f64], pred: &[f64]) -> f64 {
    match metric {
        ImportanceMetric::Mse => y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64,
        ImportanceMetric::Accuracy => {
            y.iter().zip(pred).filter(|(a, b)| a != b).count() as f64 / y.len() as f64
        }
    }
}

fn predict_all(f: &(dyn Fn(&[f64]) -> f64 + Sync), x: &DMatrix<f64>) -> Vec<f64> {
    let mut row = vec![0.0; x.ncols()];
    (0..x.nrows())
        .map(|i| {
            for (j, r) in row.iter_mut().enumerate() {
                *r = x[(i, j)];
            }
            f(&row)
        })
        .collect()
}

fn ranked(names: &[String], scores: Vec<f64>) -> Vec<RankedFeature> {
    let mut r: Vec<RankedFeature> = names
        .iter()
        .zip(scores)
        .map(|(n, s)| RankedFeature { feature: n.clone(), score: s })
        .collect();
    r.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.feature.cmp(&b.feature)));
    r
}

/// Permutation importance (mean loss increase over seeded column shuffles,
/// floored at zero) or a depth-limited regression-tree surrogate fitted to
/// the model's own outputs.
pub fn global_importance(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    x: &DMatrix<f64>,
    y: &[f64],
    names: &[String],
    config: &ImportanceConfig,
) -> Result<GlobalImportance, ExplainError> {
    let (n, p) = x.shape();
    if n == 0 {
        return Err(ExplainError::EmptyData);
    }
    check_len(p, names.len())?;
    let pred = predict_all(f, x);
    match config.method {
        ImportanceMethod::Permutation => {
            check_len(n, y.len())?;
            if config.n_repeats == 0 {
                return Err(ExplainError::InvalidConfig("n_repeats must be >= 1".into()));
            }
            let base = loss(config.metric, y, &pred);
            let scores: Vec<f64> = (0..p)
                .into_par_iter()
                .map(|j| {
                    let mut xs = x.clone();
                    let mut total = 0.0;
                    for r in 0..config.n_repeats {
                        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ ((j as u64) << 32) ^ r as u64);
                        let mut col: Vec<f64> = x.column(j).iter().copied().collect();
                        col.shuffle(&mut rng);
                        for (i, v) in col.into_iter().enumerate() {
                            xs[(i, j)] = v;
                        }
                        total += loss(config.metric, y, &predict_all(f, &xs)) - base;
                    }
                    (total / config.n_repeats as f64).max(0.0)
                })
                .collect();
            Ok(GlobalImportance {
                method: ImportanceMethod::Permutation,
                ranking: ranked(names, scores),
                surrogate_fidelity: None,
            })
        }
        ImportanceMethod::TreeSurrogate => {
            let cfg = TreeConfig {
                max_depth: Some(config.surrogate_depth),
                min_samples_leaf: 1,
            };
            let tree = fit_tree(x, &pred, Task::Regression, &cfg)?;
            let fitted = predict_all(&|r: &[f64]| tree.predict_row(r), x);
            let fidelity = if n >= 2 { regression_metrics(&pred, &fitted)?.r2 } else { 1.0 };
            Ok(GlobalImportance {
                method: ImportanceMethod::TreeSurrogate,
                ranking: ranked(names, tree.feature_importances()),
                surrogate_fidelity: Some(fidelity),
            })
        }
    }
}

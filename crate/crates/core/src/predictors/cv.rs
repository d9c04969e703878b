use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classify::{fit_baseline_classifier, BaselineKind, ClassifierConfig};
use super::forest::{fit_forest, FeatureSubset, ForestConfig};
use super::linear::{fit_linear_family, Penalty};
use super::metrics::regression_metrics;
use super::tree::{fit_tree, TreeConfig};
use super::{predict, FittedModel, ModelError, Task};
use crate::data::{Scaling, ScalingMethod};

/// Default penalty strength for the linear family.
pub const DEFAULT_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Ols,
    Ridge { lambda: f64 },
    Lasso { lambda: f64 },
    ElasticNet { lambda: f64, mix: f64 },
    Tree { max_depth: Option<usize>, min_samples_leaf: usize },
    Forest { n_trees: usize, max_depth: Option<usize>, min_samples_leaf: usize },
    Logistic { l2: f64 },
    RidgeCls { lambda: f64 },
    Knn { k: usize },
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Ols => "ols",
            ModelKind::Ridge { .. } => "ridge",
            ModelKind::Lasso { .. } => "lasso",
            ModelKind::ElasticNet { .. } => "elastic_net",
            ModelKind::Tree { .. } => "tree",
            ModelKind::Forest { .. } => "forest",
            ModelKind::Logistic { .. } => "logistic",
            ModelKind::RidgeCls { .. } => "ridge_cls",
            ModelKind::Knn { .. } => "knn",
        }
    }

    /// Kind with default hyperparameters from its name.
    pub fn from_name(name: &str) -> Option<ModelKind> {
        Some(match name {
            "ols" | "linear" => ModelKind::Ols,
            "ridge" => ModelKind::Ridge { lambda: DEFAULT_LAMBDA },
            "lasso" => ModelKind::Lasso { lambda: DEFAULT_LAMBDA },
            "elastic_net" | "elasticnet" => ModelKind::ElasticNet { lambda: DEFAULT_LAMBDA, mix: 0.5 },
            "tree" => ModelKind::Tree { max_depth: Some(8), min_samples_leaf: 5 },
            "forest" | "random_forest" => ModelKind::Forest { n_trees: 100, max_depth: None, min_samples_leaf: 1 },
            "logistic" => ModelKind::Logistic { l2: 1.0 },
            "ridge_cls" => ModelKind::RidgeCls { lambda: DEFAULT_LAMBDA },
            "knn" => ModelKind::Knn { k: 5 },
            _ => return None,
        })
    }

    /// Task a kind supports, or `None` for kinds that do both.
    pub fn fixed_task(&self) -> Option<Task> {
        match self {
            ModelKind::Ols | ModelKind::Ridge { .. } | ModelKind::Lasso { .. } | ModelKind::ElasticNet { .. } => {
                Some(Task::Regression)
            }
            ModelKind::Logistic { .. } | ModelKind::RidgeCls { .. } | ModelKind::Knn { .. } => {
                Some(Task::Classification)
            }
            ModelKind::Tree { .. } | ModelKind::Forest { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub task: Task,
    /// Z-score every feature on the training rows before fitting.
    #[serde(default = "yes")]
    pub standardize: bool,
}

fn yes() -> bool {
    true
}

impl ModelSpec {
    pub fn new(kind: ModelKind, task: Task) -> Result<Self, ModelError> {
        if kind.fixed_task().is_some_and(|t| t != task) {
            return Err(ModelError::InvalidConfig(format!("{} does not support {task:?}", kind.name())));
        }
        Ok(Self {
            kind,
            task,
            standardize: true,
        })
    }

    /// `name` picks defaults; tree and forest default to regression unless
    /// `task` says otherwise.
    pub fn from_name(name: &str, task: Option<Task>) -> Result<Self, ModelError> {
        let kind = ModelKind::from_name(name)
            .ok_or_else(|| ModelError::InvalidConfig(format!("unknown model {name}")))?;
        let task = task.or(kind.fixed_task()).unwrap_or(Task::Regression);
        Self::new(kind, task)
    }

    pub fn label(&self) -> String {
        match (self.kind.fixed_task(), self.task) {
            (None, Task::Classification) => format!("{}_cls", self.kind.name()),
            _ => self.kind.name().to_string(),
        }
    }
}

/// Per-column z-scoring fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub scalings: Vec<Scaling>,
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let scalings = (0..x.ncols())
            .map(|j| {
                let col: Vec<f64> = x.column(j).iter().copied().collect();
                Scaling::fit(ScalingMethod::Zscore, &col, None)
            })
            .collect();
        Self { scalings }
    }

    pub fn identity(p: usize) -> Self {
        Self {
            scalings: vec![Scaling::None; p],
        }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| self.scalings[j].apply(x[(i, j)]))
    }

    pub fn apply_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.scalings).map(|(v, s)| s.apply(*v)).collect()
    }
}

/// Fits `spec` on already-prepared features. Classification targets are
/// class indices stored as `f64`.
pub fn fit_spec(spec: &ModelSpec, x: &DMatrix<f64>, y: &[f64], seed: u64) -> Result<FittedModel, ModelError> {
    let task = spec.task;
    let linear = |p: Penalty| fit_linear_family(x, y, p).map(FittedModel::Linear);
    match spec.kind {
        ModelKind::Ols => linear(Penalty::None),
        ModelKind::Ridge { lambda } => linear(Penalty::Ridge { lambda }),
        ModelKind::Lasso { lambda } => linear(Penalty::Lasso { lambda }),
        ModelKind::ElasticNet { lambda, mix } => linear(Penalty::ElasticNet { lambda, mix }),
        ModelKind::Tree { max_depth, min_samples_leaf } => {
            fit_tree(x, y, task, &TreeConfig { max_depth, min_samples_leaf }).map(FittedModel::Tree)
        }
        ModelKind::Forest { n_trees, max_depth, min_samples_leaf } => {
            let cfg = ForestConfig {
                n_trees,
                tree: TreeConfig { max_depth, min_samples_leaf },
                bootstrap: true,
                max_features: FeatureSubset::Auto,
            };
            fit_forest(x, y, task, &cfg, seed).map(FittedModel::Forest)
        }
        ModelKind::Logistic { l2 } => {
            let cfg = ClassifierConfig { l2, ..Default::default() };
            fit_baseline_classifier(BaselineKind::Logistic, x, y, &cfg)
        }
        ModelKind::RidgeCls { lambda } => {
            let cfg = ClassifierConfig { ridge_lambda: lambda, ..Default::default() };
            fit_baseline_classifier(BaselineKind::RidgeCls, x, y, &cfg)
        }
        ModelKind::Knn { k } => fit_baseline_classifier(BaselineKind::Knn { k }, x, y, &Default::default()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub test_indices: Vec<usize>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// `r2` for regression, `accuracy` for classification.
    pub metric: String,
    pub folds: Vec<FoldResult>,
    pub mean: f64,
    /// Sample standard deviation over folds.
    pub sd: f64,
}

/// Shuffled k-fold partition: fold sizes differ by at most one and each
/// fold's indices are sorted.
pub fn fold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, ModelError> {
    if k < 2 || n < k {
        return Err(ModelError::TooFewRows { n, k });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = n / k + usize::from(f < n % k);
        let mut fold = idx[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }
    Ok(folds)
}

fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

fn score(task: Task, y: &[f64], pred: &[f64]) -> Result<f64, ModelError> {
    match task {
        Task::Regression => {
            if y.len() < 2 {
                // R² is undefined on one row; fall back to negative squared error.
                return Ok(-(y[0] - pred[0]).powi(2));
            }
            Ok(regression_metrics(y, pred)?.r2)
        }
        Task::Classification => Ok(y.iter().zip(pred).filter(|(a, b)| a == b).count() as f64 / y.len() as f64),
    }
}

/// k-fold cross-validation on raw features; standardization (if the spec
/// asks for it) is refit on each training fold. Folds run in parallel and
/// are merged in fold order.
pub fn cross_validate(
    spec: &ModelSpec,
    x: &DMatrix<f64>,
    y: &[f64],
    k: usize,
    seed: u64,
) -> Result<CvResult, ModelError> {
    let n = x.nrows();
    if y.len() != n {
        return Err(ModelError::LengthMismatch(n, y.len()));
    }
    let folds = fold_indices(n, k, seed)?;
    let results = folds
        .par_iter()
        .map(|test| {
            let mut in_test = vec![false; n];
            test.iter().for_each(|&i| in_test[i] = true);
            let train: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
            let (xtr, xte) = (select_rows(x, &train), select_rows(x, test));
            let st = if spec.standardize { Standardizer::fit(&xtr) } else { Standardizer::identity(x.ncols()) };
            let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let yte: Vec<f64> = test.iter().map(|&i| y[i]).collect();
            let model = fit_spec(spec, &st.apply(&xtr), &ytr, seed)?;
            let pred = predict(&model, &st.apply(&xte))?;
            Ok(FoldResult {
                test_indices: test.clone(),
                score: score(spec.task, &yte, &pred)?,
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let m = results.len() as f64;
    let mean = results.iter().map(|r| r.score).sum::<f64>() / m;
    let sd = (results.iter().map(|r| (r.score - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    Ok(CvResult {
        metric: match spec.task {
            Task::Regression => "r2".into(),
            Task::Classification => "accuracy".into(),
        },
        folds: results,
        mean,
        sd,
    })
}

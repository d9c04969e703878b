use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, TreeConfig, TreeModel};
use super::{argmax, n_classes, ModelError, Task};

/// Features considered at each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubset {
    /// `ceil(sqrt(p))` for classification, `ceil(p / 3)` for regression.
    Auto,
    All,
    Count(usize),
}

impl FeatureSubset {
    pub fn resolve(self, p: usize, task: Task) -> usize {
        let m = match self {
            FeatureSubset::Auto => match task {
                Task::Classification => (p as f64).sqrt().ceil() as usize,
                Task::Regression => p.div_ceil(3),
            },
            FeatureSubset::All => p,
            FeatureSubset::Count(m) => m,
        };
        m.clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub tree: TreeConfig,
    pub bootstrap: bool,
    pub max_features: FeatureSubset,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            tree: TreeConfig::default(),
            bootstrap: true,
            max_features: FeatureSubset::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub task: Task,
    pub trees: Vec<TreeModel>,
    pub n_trees: usize,
    pub feature_subset: FeatureSubset,
    pub max_features: usize,
    pub bootstrap: bool,
    /// Per-tree seeds drawn from the forest seed, in tree order.
    pub seeds: Vec<u64>,
    pub n_features: usize,
    #[serde(default)]
    pub n_classes: usize,
}

impl ForestModel {
    /// Mean over trees (regression) or majority vote with ties going to the
    /// lowest class index.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self.task {
            Task::Regression => {
                self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64
            }
            Task::Classification => {
                let mut votes = vec![0.0; self.n_classes.max(1)];
                for t in &self.trees {
                    votes[t.predict_row(x) as usize] += 1.0;
                }
                argmax(&votes) as f64
            }
        }
    }

    /// Mean normalized impurity importance over trees.
    pub fn feature_importances(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for t in &self.trees {
            for (a, b) in imp.iter_mut().zip(t.feature_importances()) {
                *a += b / self.trees.len() as f64;
            }
        }
        imp
    }
}

/// Bagged trees with per-split feature subsampling. Trees are grown in
/// parallel; each uses its own seed so results do not depend on scheduling.
pub fn fit_forest(
    x: &DMatrix<f64>,
    y: &[f64],
    task: Task,
    config: &ForestConfig,
    seed: u64,
) -> Result<ForestModel, ModelError> {
    if config.n_trees == 0 {
        return Err(ModelError::InvalidConfig("n_trees must be >= 1".into()));
    }
    let (n, p) = x.shape();
    if n == 0 {
        return Err(ModelError::EmptyData);
    }
    let k = if task == Task::Classification { n_classes(y) } else { 0 };
    let m = config.max_features.resolve(p, task);
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..config.n_trees).map(|_| master.random()).collect();
    let trees = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let rows: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow(x, y, &rows, task, &config.tree, k, Some((&mut rng, m)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ForestModel {
        task,
        trees,
        n_trees: config.n_trees,
        feature_subset: config.max_features,
        max_features: m,
        bootstrap: config.bootstrap,
        seeds,
        n_features: p,
        n_classes: k,
    })
}

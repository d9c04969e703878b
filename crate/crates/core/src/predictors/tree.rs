use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, n_classes, ModelError, Task};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Weighted impurity decrease achieved by the split.
        gain: f64,
    },
    Leaf {
        /// Mean target (regression) or majority class index.
        value: f64,
        /// Class proportions; empty for regression.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        distribution: Vec<f64>,
        n_samples: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub task: Task,
    pub nodes: Vec<TreeNode>,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub n_features: usize,
    #[serde(default)]
    pub n_classes: usize,
}

impl TreeModel {
    fn leaf_for(&self, x: &[f64]) -> &TreeNode {
        assert_eq!(x.len(), self.n_features, "feature count mismatch");
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                leaf => return leaf,
            }
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self.leaf_for(x) {
            TreeNode::Leaf { value, .. } => *value,
            TreeNode::Split { .. } => unreachable!(),
        }
    }

    /// Leaf class proportions (classification trees).
    pub fn predict_distribution(&self, x: &[f64]) -> &[f64] {
        match self.leaf_for(x) {
            TreeNode::Leaf { distribution, .. } => distribution,
            TreeNode::Split { .. } => unreachable!(),
        }
    }

    /// Total impurity decrease per feature, normalized to sum to 1 (all
    /// zeros for a single leaf).
    pub fn feature_importances(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for n in &self.nodes {
            if let TreeNode::Split { feature, gain, .. } = n {
                imp[*feature] += gain;
            }
        }
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            imp.iter_mut().for_each(|v| *v /= total);
        }
        imp
    }

    pub fn depth(&self) -> usize {
        fn rec(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Split { left, right, .. } => 1 + rec(nodes, *left).max(rec(nodes, *right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        rec(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }
}

/// Grows a CART tree greedily. Splits maximize variance reduction
/// (regression) or Gini decrease (classification); ties go to the lowest
/// feature index, then the lowest threshold.
pub fn fit_tree(
    x: &DMatrix<f64>,
    y: &[f64],
    task: Task,
    config: &TreeConfig,
) -> Result<TreeModel, ModelError> {
    let rows: Vec<usize> = (0..x.nrows()).collect();
    let k = if task == Task::Classification { n_classes(y) } else { 0 };
    grow(x, y, &rows, task, config, k, None)
}

pub(crate) fn grow(
    x: &DMatrix<f64>,
    y: &[f64],
    rows: &[usize],
    task: Task,
    config: &TreeConfig,
    n_classes: usize,
    features_per_split: Option<(&mut ChaCha8Rng, usize)>,
) -> Result<TreeModel, ModelError> {
    if x.nrows() == 0 || rows.is_empty() {
        return Err(ModelError::EmptyData);
    }
    if y.len() != x.nrows() {
        return Err(ModelError::LengthMismatch(x.nrows(), y.len()));
    }
    if config.min_samples_leaf == 0 {
        return Err(ModelError::InvalidConfig("min_samples_leaf must be >= 1".into()));
    }
    if rows.len() < 2 * config.min_samples_leaf {
        return Err(ModelError::InvalidConfig(format!(
            "{} rows cannot hold two leaves of {}",
            rows.len(),
            config.min_samples_leaf
        )));
    }
    let mut b = Builder {
        x,
        y,
        task,
        config,
        n_classes,
        sampler: features_per_split,
        nodes: Vec::new(),
    };
    b.build(rows.to_vec(), 0);
    Ok(TreeModel {
        task,
        nodes: b.nodes,
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
        n_features: x.ncols(),
        n_classes,
    })
}

struct Builder<'a, 'r> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    task: Task,
    config: &'a TreeConfig,
    n_classes: usize,
    sampler: Option<(&'r mut ChaCha8Rng, usize)>,
    nodes: Vec<TreeNode>,
}

/// Running sufficient statistics for one side of a split.
#[derive(Clone)]
struct Stats {
    n: f64,
    sum: f64,
    sum_sq: f64,
    counts: Vec<f64>,
}

impl Stats {
    fn new(k: usize) -> Self {
        Self {
            n: 0.0,
            sum: 0.0,
            sum_sq: 0.0,
            counts: vec![0.0; k],
        }
    }

    fn add(&mut self, y: f64, task: Task, sign: f64) {
        self.n += sign;
        match task {
            Task::Regression => {
                self.sum += sign * y;
                self.sum_sq += sign * y * y;
            }
            Task::Classification => self.counts[y as usize] += sign,
        }
    }

    /// Impurity times sample count (SSE or n * Gini).
    fn weighted_impurity(&self, task: Task) -> f64 {
        if self.n <= 0.0 {
            return 0.0;
        }
        match task {
            Task::Regression => (self.sum_sq - self.sum * self.sum / self.n).max(0.0),
            Task::Classification => {
                self.n - self.counts.iter().map(|c| c * c).sum::<f64>() / self.n
            }
        }
    }
}

impl Builder<'_, '_> {
    fn stats(&self, rows: &[usize]) -> Stats {
        let mut s = Stats::new(self.n_classes);
        for &i in rows {
            s.add(self.y[i], self.task, 1.0);
        }
        s
    }

    fn leaf(&self, rows: &[usize], s: &Stats) -> TreeNode {
        match self.task {
            Task::Regression => TreeNode::Leaf {
                value: s.sum / s.n,
                distribution: Vec::new(),
                n_samples: rows.len(),
            },
            Task::Classification => {
                let distribution: Vec<f64> = s.counts.iter().map(|c| c / s.n).collect();
                TreeNode::Leaf {
                    value: argmax(&distribution) as f64,
                    distribution,
                    n_samples: rows.len(),
                }
            }
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let p = self.x.ncols();
        match self.sampler.as_mut() {
            Some((rng, m)) if *m < p => {
                let mut f = sample(*rng, p, *m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        }
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let s = self.stats(&rows);
        self.nodes.push(self.leaf(&rows, &s));
        let parent = s.weighted_impurity(self.task);
        let msl = self.config.min_samples_leaf;
        let pure = match self.task {
            Task::Regression => rows.iter().all(|&i| self.y[i] == self.y[rows[0]]),
            Task::Classification => s.counts.iter().filter(|&&c| c > 0.0).count() <= 1,
        };
        if pure || rows.len() < 2 * msl || self.config.max_depth.is_some_and(|d| depth >= d) {
            return id;
        }

        let mut best: Option<(f64, usize, f64)> = None;
        let min_gain = 1e-12 * parent.max(f64::MIN_POSITIVE);
        let mut sorted = rows.clone();
        for f in self.candidate_features() {
            sorted.sort_by(|&a, &b| self.x[(a, f)].total_cmp(&self.x[(b, f)]).then(a.cmp(&b)));
            let mut left = Stats::new(self.n_classes);
            let mut right = s.clone();
            for k in 0..sorted.len() - 1 {
                let yi = self.y[sorted[k]];
                left.add(yi, self.task, 1.0);
                right.add(yi, self.task, -1.0);
                let (lo, hi) = (self.x[(sorted[k], f)], self.x[(sorted[k + 1], f)]);
                if lo == hi || k + 1 < msl || sorted.len() - k - 1 < msl {
                    continue;
                }
                let gain = parent - left.weighted_impurity(self.task) - right.weighted_impurity(self.task);
                if gain > min_gain && best.is_none_or(|(g, _, _)| gain > g) {
                    let mid = lo + (hi - lo) / 2.0;
                    best = Some((gain, f, if mid < hi { mid } else { lo }));
                }
            }
        }
        let Some((gain, feature, threshold)) = best else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| self.x[(i, feature)] <= threshold);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
            gain,
        };
        id
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target_is_single_leaf() {
        let x = DMatrix::from_fn(10, 2, |i, j| (i * (j + 1)) as f64);
        let t = fit_tree(&x, &[3.0; 10], Task::Regression, &TreeConfig::default()).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict_row(&[100.0, -4.0]), 3.0);
    }

    #[test]
    fn separable_classes_fit_perfectly() {
        let x = DMatrix::from_fn(40, 2, |i, j| if j == 0 { i as f64 } else { ((i * 7) % 5) as f64 });
        let y: Vec<f64> = (0..40).map(|i| if i < 17 { 0.0 } else { 1.0 }).collect();
        let t = fit_tree(&x, &y, Task::Classification, &TreeConfig::default()).unwrap();
        for i in 0..40 {
            assert_eq!(t.predict_row(&[i as f64, ((i * 7) % 5) as f64]), y[i]);
        }
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn hand_worked_gini_split() {
        // x: 1 2 3 4 5 6, y: 0 0 1 0 1 1. Parent n*gini = 6 - 18/6 = 3.
        // Candidate gains (n*gini form):
        //  t=1.5: L{0} 0, R{0,1,0,1,1} 5-13/5=2.4 -> 0.6
        //  t=2.5: L{0,0} 0, R{1,0,1,1} 4-10/4=1.5 -> 1.5
        //  t=3.5: L{0,0,1} 3-5/3=4/3, R{0,1,1} 4/3 -> 1/3
        //  t=4.5: L{0,0,1,0} 4-10/4=1.5, R{1,1} 0 -> 1.5
        //  t=5.5: L 5-13/5=2.4, R 0 -> 0.6
        // Tie between 2.5 and 4.5 goes to the lower threshold.
        let x = DMatrix::from_column_slice(6, 1, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = [0.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let t = fit_tree(&x, &y, Task::Classification, &TreeConfig { max_depth: Some(1), min_samples_leaf: 1 }).unwrap();
        match &t.nodes[0] {
            TreeNode::Split { feature, threshold, gain, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 2.5);
                assert!((gain - 1.5).abs() < 1e-12);
            }
            _ => panic!("expected split"),
        }
    }

    #[test]
    fn tie_goes_to_lowest_feature() {
        let x = DMatrix::from_fn(8, 3, |i, _| i as f64);
        let y: Vec<f64> = (0..8).map(|i| (i >= 4) as u8 as f64).collect();
        let t = fit_tree(&x, &y, Task::Classification, &TreeConfig::default()).unwrap();
        assert!(matches!(t.nodes[0], TreeNode::Split { feature: 0, .. }));
    }

    #[test]
    fn respects_depth_and_leaf_size() {
        let x = DMatrix::from_fn(200, 3, |i, j| ((i * 31 + j * 17) % 97) as f64);
        let y: Vec<f64> = (0..200).map(|i| ((i * 13) % 7) as f64).collect();
        let cfg = TreeConfig { max_depth: Some(3), min_samples_leaf: 10 };
        let t = fit_tree(&x, &y, Task::Regression, &cfg).unwrap();
        assert!(t.depth() <= 3);
        for n in &t.nodes {
            if let TreeNode::Leaf { n_samples, .. } = n {
                assert!(*n_samples >= 10);
            }
        }
    }

    #[test]
    fn leaf_distributions_sum_to_one() {
        let x = DMatrix::from_fn(60, 2, |i, j| ((i * 7 + j * 3) % 11) as f64);
        let y: Vec<f64> = (0..60).map(|i| (i % 3) as f64).collect();
        let t = fit_tree(&x, &y, Task::Classification, &TreeConfig { max_depth: Some(2), min_samples_leaf: 1 }).unwrap();
        for n in &t.nodes {
            if let TreeNode::Leaf { distribution, .. } = n {
                assert!((distribution.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn row_order_invariant() {
        let x = DMatrix::from_fn(50, 3, |i, j| ((i * 13 + j * 7) % 23) as f64);
        let y: Vec<f64> = (0..50).map(|i| ((i * 5) % 9) as f64 * 0.1).collect();
        let perm: Vec<usize> = (0..50).map(|i| (i * 17) % 50).collect();
        let xp = DMatrix::from_fn(50, 3, |i, j| x[(perm[i], j)]);
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let a = fit_tree(&x, &y, Task::Regression, &TreeConfig::default()).unwrap();
        let b = fit_tree(&xp, &yp, Task::Regression, &TreeConfig::default()).unwrap();
        for i in 0..50 {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            assert!((a.predict_row(&row) - b.predict_row(&row)).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_rows_for_leaf_size() {
        let x = DMatrix::from_element(3, 1, 1.0);
        let cfg = TreeConfig { max_depth: None, min_samples_leaf: 2 };
        assert!(fit_tree(&x, &[1.0, 2.0, 3.0], Task::Regression, &cfg).is_err());
    }
}

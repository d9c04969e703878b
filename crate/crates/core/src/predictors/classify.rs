use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::linear::{fit_linear_family, LinearModel, Penalty};
use super::{argmax, n_classes, FittedModel, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineKind {
    Logistic,
    RidgeCls,
    Knn { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    /// L2 strength for logistic regression, on the summed loss.
    pub l2: f64,
    /// Ridge strength for the one-vs-rest ridge classifier.
    pub ridge_lambda: f64,
    /// Logistic stops once the mean loss changes by less than this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            l2: 1.0,
            ridge_lambda: 1.0,
            tol: 1e-12,
            max_iters: 50_000,
        }
    }
}

/// Multinomial logistic regression: `weights[c]` and `intercepts[c]` per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub l2: f64,
    pub iterations: usize,
}

impl LogisticModel {
    pub fn n_features(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.intercepts)
            .map(|(w, b)| b + w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
            .collect();
        softmax(&z)
    }

    pub fn predict_row(&self, x: &[f64]) -> usize {
        assert_eq!(x.len(), self.n_features(), "feature count mismatch");
        argmax(&self.probabilities(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeClassifierModel {
    /// One ridge model per class, fit to +1/-1 targets.
    pub per_class: Vec<LinearModel>,
}

impl RidgeClassifierModel {
    pub fn n_features(&self) -> usize {
        self.per_class.first().map_or(0, |m| m.weights.len())
    }

    pub fn predict_row(&self, x: &[f64]) -> usize {
        let scores: Vec<f64> = self.per_class.iter().map(|m| m.predict_row(x)).collect();
        argmax(&scores)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
    pub n_classes: usize,
}

impl KnnModel {
    pub fn n_features(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// Majority class among the `k` nearest rows (Euclidean; ties in
    /// distance go to the lower row index). A tied vote goes to the class
    /// whose member is nearest.
    pub fn predict_row(&self, q: &[f64]) -> usize {
        assert_eq!(q.len(), self.n_features(), "feature count mismatch");
        let mut d: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
            .collect();
        let k = self.k.min(d.len());
        d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut near = d[..k].to_vec();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = vec![0usize; self.n_classes];
        for &(_, i) in &near {
            votes[self.y[i]] += 1;
        }
        let top = *votes.iter().max().unwrap();
        near.iter()
            .map(|&(_, i)| self.y[i])
            .find(|&c| votes[c] == top)
            .unwrap()
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn fit_baseline_classifier(
    kind: BaselineKind,
    x: &DMatrix<f64>,
    y: &[f64],
    config: &ClassifierConfig,
) -> Result<FittedModel, ModelError> {
    let n = x.nrows();
    if n == 0 {
        return Err(ModelError::EmptyData);
    }
    if y.len() != n {
        return Err(ModelError::LengthMismatch(n, y.len()));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(ModelError::SingleClass);
    }
    let k = n_classes(y);
    match kind {
        BaselineKind::Logistic => Ok(FittedModel::Logistic(fit_logistic(x, y, k, config)?)),
        BaselineKind::RidgeCls => {
            let per_class = (0..k)
                .map(|c| {
                    let t: Vec<f64> = y.iter().map(|&v| if v as usize == c { 1.0 } else { -1.0 }).collect();
                    fit_linear_family(x, &t, Penalty::Ridge { lambda: config.ridge_lambda })
                })
                .collect::<Result<_, _>>()?;
            Ok(FittedModel::RidgeClassifier(RidgeClassifierModel { per_class }))
        }
        BaselineKind::Knn { k: kk } => {
            if kk == 0 {
                return Err(ModelError::InvalidConfig("k must be >= 1".into()));
            }
            Ok(FittedModel::Knn(KnnModel {
                k: kk,
                x: (0..n).map(|i| x.row(i).iter().copied().collect()).collect(),
                y: y.iter().map(|&v| v as usize).collect(),
                n_classes: k,
            }))
        }
    }
}

/// Mean cross-entropy plus `l2 / (2n) |W|^2` and its gradient. Parameters
/// are packed as a `k x (p + 1)` matrix with the intercept last.
fn logistic_loss(x1: &DMatrix<f64>, onehot: &DMatrix<f64>, theta: &DMatrix<f64>, l2: f64) -> (f64, DMatrix<f64>) {
    let n = x1.nrows() as f64;
    let p = x1.ncols() - 1;
    let z = x1 * theta.transpose();
    let mut probs = z.clone();
    let mut loss = 0.0;
    for (i, mut row) in probs.row_iter_mut().enumerate() {
        let m = row.max();
        row.apply(|v| *v = (*v - m).exp());
        let s = row.sum();
        row /= s;
        let c = (0..onehot.ncols()).find(|&c| onehot[(i, c)] == 1.0).unwrap();
        loss -= z[(i, c)] - m - s.ln();
    }
    let mut grad = (probs - onehot).transpose() * x1 / n;
    let mut pen = 0.0;
    for c in 0..theta.nrows() {
        for j in 0..p {
            pen += theta[(c, j)].powi(2);
            grad[(c, j)] += l2 / n * theta[(c, j)];
        }
    }
    (loss / n + 0.5 * l2 / n * pen, grad)
}

fn fit_logistic(
    x: &DMatrix<f64>,
    y: &[f64],
    k: usize,
    config: &ClassifierConfig,
) -> Result<LogisticModel, ModelError> {
    let (n, p) = x.shape();
    let x1 = x.clone().insert_column(p, 1.0);
    let onehot = DMatrix::from_fn(n, k, |i, c| if y[i] as usize == c { 1.0 } else { 0.0 });
    let mut theta = DMatrix::zeros(k, p + 1);
    let mut loss = logistic_loss(&x1, &onehot, &theta, config.l2).0;
    // Accelerated gradient descent with backtracking and restart on any
    // increase of the objective.
    let mut momentum = theta.clone();
    let mut t = 1.0f64;
    let mut step = 1.0;
    for it in 1..=config.max_iters {
        let (ly, gy) = logistic_loss(&x1, &onehot, &momentum, config.l2);
        let g2 = gy.norm_squared();
        let (next, next_loss) = loop {
            let cand = &momentum - &gy * step;
            let l = logistic_loss(&x1, &onehot, &cand, config.l2).0;
            if l <= ly - 0.5 * step * g2 || step < 1e-12 {
                break (cand, l);
            }
            step *= 0.5;
        };
        step = (step * 1.5).min(64.0);
        if next_loss > loss {
            momentum = theta.clone();
            t = 1.0;
            continue;
        }
        let change = loss - next_loss;
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        momentum = &next + (&next - &theta) * ((t - 1.0) / t_next);
        t = t_next;
        theta = next;
        loss = next_loss;
        if change < config.tol * loss.max(1.0) || g2.sqrt() < 1e-10 {
            let weights = (0..k).map(|c| (0..p).map(|j| theta[(c, j)]).collect()).collect();
            let intercepts = (0..k).map(|c| theta[(c, p)]).collect();
            return Ok(LogisticModel {
                weights,
                intercepts,
                l2: config.l2,
                iterations: it,
            });
        }
    }
    Err(ModelError::NonConvergence(config.max_iters))
}

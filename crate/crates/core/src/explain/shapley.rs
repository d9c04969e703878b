use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_len, column_means, ExplainError};
use crate::data::RawValue;
use crate::predictors::LinearModel;

pub const DEFAULT_MAX_FEATURES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapleyMethod {
    ExactLinear,
    BruteForce,
    Sampled { n_samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub feature: String,
    pub raw_value: RawValue,
    pub phi: f64,
    /// Standard error of `phi` (sampled estimator only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
}

/// `prediction = base_value + Σ phi` (exactly for the exact methods). The
/// base value is the model output at the background mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub base_value: f64,
    pub prediction: f64,
    pub method: ShapleyMethod,
    pub contributions: Vec<Contribution>,
}

impl Attribution {
    fn new(names: &[String], x: &[f64], phi: Vec<f64>, se: Option<Vec<f64>>, base: f64, pred: f64, method: ShapleyMethod) -> Self {
        let contributions = names
            .iter()
            .zip(x)
            .zip(phi)
            .enumerate()
            .map(|(j, ((n, v), phi))| Contribution {
                feature: n.clone(),
                raw_value: RawValue::Number(*v),
                phi,
                std_error: se.as_ref().map(|s| s[j]),
            })
            .collect();
        Attribution {
            base_value: base,
            prediction: pred,
            method,
            contributions,
        }
    }

    pub fn phi(&self) -> Vec<f64> {
        self.contributions.iter().map(|c| c.phi).collect()
    }

    pub fn phi_of(&self, feature: &str) -> Option<f64> {
        self.contributions.iter().find(|c| c.feature == feature).map(|c| c.phi)
    }

    /// `prediction - base_value - Σ phi`.
    pub fn efficiency_gap(&self) -> f64 {
        self.prediction - self.base_value - self.contributions.iter().map(|c| c.phi).sum::<f64>()
    }

    /// Replaces the model-unit `raw_value`s, e.g. with survey answers.
    pub fn with_raw_values(mut self, values: impl IntoIterator<Item = RawValue>) -> Self {
        for (c, v) in self.contributions.iter_mut().zip(values) {
            c.raw_value = v;
        }
        self
    }
}

/// Closed form for linear models: `phi_j = w_j (x_j - mean_j)`.
pub fn shapley_exact_linear(
    model: &LinearModel,
    x: &[f64],
    background: &DMatrix<f64>,
    names: &[String],
) -> Result<Attribution, ExplainError> {
    let p = model.weights.len();
    check_len(p, x.len())?;
    check_len(p, background.ncols())?;
    check_len(p, names.len())?;
    let mu = column_means(background)?;
    let phi = (0..p).map(|j| model.weights[j] * (x[j] - mu[j])).collect();
    let base = model.predict_row(&mu);
    let pred = model.predict_row(x);
    Ok(Attribution::new(names, x, phi, None, base, pred, ShapleyMethod::ExactLinear))
}

/// `|S|! (p - |S| - 1)! / p!`.
pub fn shapley_weight(s: usize, p: usize) -> f64 {
    // Computed as 1 / (p * C(p-1, s)) to stay exact for small p.
    let mut c = 1.0;
    for i in 0..s {
        c = c * (p - 1 - i) as f64 / (i + 1) as f64;
    }
    1.0 / (p as f64 * c)
}

/// Sums over every coalition, with absent features set to the background
/// mean.
pub fn shapley_brute_force(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    x: &[f64],
    background: &DMatrix<f64>,
    names: &[String],
    max_features: usize,
) -> Result<Attribution, ExplainError> {
    let p = x.len();
    if p > max_features.min(24) {
        return Err(ExplainError::TooManyFeatures { p, max: max_features });
    }
    check_len(p, background.ncols())?;
    check_len(p, names.len())?;
    let mu = column_means(background)?;
    let value: Vec<f64> = (0..1usize << p)
        .into_par_iter()
        .map(|mask| {
            let z: Vec<f64> = (0..p).map(|j| if mask >> j & 1 == 1 { x[j] } else { mu[j] }).collect();
            f(&z)
        })
        .collect();
    let weights: Vec<f64> = (0..p).map(|s| shapley_weight(s, p)).collect();
    let mut phi = vec![0.0; p];
    for (j, phi_j) in phi.iter_mut().enumerate() {
        let bit = 1usize << j;
        for mask in (0..1usize << p).filter(|m| m & bit == 0) {
            *phi_j += weights[mask.count_ones() as usize] * (value[mask | bit] - value[mask]);
        }
    }
    let full = (1usize << p) - 1;
    Ok(Attribution::new(names, x, phi, None, value[0], value[full], ShapleyMethod::BruteForce))
}

/// Permutation-sampling estimator. Each permutation adds features one at a
/// time to the background mean; `phi_j` is the mean marginal change.
pub fn shapley_sampled(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    x: &[f64],
    background: &DMatrix<f64>,
    names: &[String],
    n_samples: usize,
    seed: u64,
) -> Result<Attribution, ExplainError> {
    if n_samples < 100 {
        return Err(ExplainError::InvalidConfig("n_samples must be >= 100".into()));
    }
    let p = x.len();
    check_len(p, background.ncols())?;
    check_len(p, names.len())?;
    let mu = column_means(background)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perms: Vec<Vec<usize>> = (0..n_samples)
        .map(|_| {
            let mut o: Vec<usize> = (0..p).collect();
            o.shuffle(&mut rng);
            o
        })
        .collect();
    let base = f(&mu);
    let draws: Vec<Vec<f64>> = perms
        .par_iter()
        .map(|order| {
            let mut z = mu.clone();
            let mut prev = base;
            let mut d = vec![0.0; p];
            for &j in order {
                z[j] = x[j];
                let cur = f(&z);
                d[j] = cur - prev;
                prev = cur;
            }
            d
        })
        .collect();
    let n = n_samples as f64;
    let mut phi = vec![0.0; p];
    let mut se = vec![0.0; p];
    for j in 0..p {
        let m = draws.iter().map(|d| d[j]).sum::<f64>() / n;
        let var = draws.iter().map(|d| (d[j] - m).powi(2)).sum::<f64>() / (n - 1.0);
        phi[j] = m;
        se[j] = (var / n).sqrt();
    }
    Ok(Attribution::new(names, x, phi, Some(se), base, f(x), ShapleyMethod::Sampled { n_samples, seed }))
}

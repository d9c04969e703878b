use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_len, DomainKind, ExplainError, FeatureDomain};
use crate::predictors::{fit_linear_weighted, LinearModel, Penalty, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimeConfig {
    pub n_perturbations: usize,
    /// `None` means `0.75 * sqrt(p)`.
    pub kernel_width: Option<f64>,
    pub n_rules: usize,
    pub seed: u64,
    /// L1 strength per unit of total sample weight.
    pub lambda: f64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self {
            n_perturbations: 500,
            kernel_width: None,
            n_rules: 10,
            seed: 0,
            lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub feature: String,
    /// Human-readable interval in raw units.
    pub condition: String,
    /// Interval bounds in model units; `lower < x <= upper`.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalExplanation {
    pub feature_rules: Vec<Rule>,
    pub intercept: f64,
    /// Kernel-weighted R² of the surrogate on the neighbourhood.
    pub local_fidelity_r2: f64,
    pub prediction_range: [f64; 2],
    pub prediction: f64,
    pub surrogate_prediction: f64,
    pub kernel_width: f64,
    pub n_perturbations: usize,
}

pub(crate) struct Neighborhood {
    pub z: DMatrix<f64>,
    pub fz: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Row 0 is `x` itself; the rest perturb continuous inputs with Gaussian
/// noise (clamped to the domain) and resample coded inputs uniformly.
pub(crate) fn neighborhood(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    x: &[f64],
    domains: &[FeatureDomain],
    n: usize,
    width: f64,
    seed: u64,
) -> Neighborhood {
    let p = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = DMatrix::zeros(n, p);
    for j in 0..p {
        z[(0, j)] = x[j];
    }
    for i in 1..n {
        for (j, d) in domains.iter().enumerate() {
            z[(i, j)] = match &d.kind {
                DomainKind::Continuous { sd, min, max } => {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    (x[j] + sd * e).clamp(*min, *max)
                }
                DomainKind::Levels { values, .. } => values[rng.random_range(0..values.len())],
            };
        }
    }
    let mut fz = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut row = vec![0.0; p];
    for i in 0..n {
        let mut d2 = 0.0;
        for j in 0..p {
            row[j] = z[(i, j)];
            d2 += (row[j] - x[j]).powi(2);
        }
        fz.push(f(&row));
        weights.push((-d2 / (width * width)).exp());
    }
    Neighborhood { z, fz, weights }
}

pub(crate) fn fit_surrogate(nb: &Neighborhood, lambda: f64) -> Result<LinearModel, ExplainError> {
    let total: f64 = nb.weights.iter().sum();
    let penalty = Penalty::Lasso { lambda: lambda * total };
    Ok(fit_linear_weighted(&nb.z, &nb.fz, Some(&nb.weights), penalty, &SolverOptions::default())?)
}

fn quartiles(mut v: Vec<f64>) -> [f64; 3] {
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (v.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    [q(0.25), q(0.5), q(0.75)]
}

fn interval(d: &FeatureDomain, xj: f64, q: [f64; 3]) -> (Option<f64>, Option<f64>, String) {
    let raw = |v: f64| format!("{:.2}", d.scaling.invert(v));
    let name = &d.name;
    if xj <= q[0] {
        (None, Some(q[0]), format!("{name} <= {}", raw(q[0])))
    } else if xj <= q[1] {
        (Some(q[0]), Some(q[1]), format!("{} < {name} <= {}", raw(q[0]), raw(q[1])))
    } else if xj <= q[2] {
        (Some(q[1]), Some(q[2]), format!("{} < {name} <= {}", raw(q[1]), raw(q[2])))
    } else {
        (Some(q[2]), None, format!("{name} > {}", raw(q[2])))
    }
}

/// Fits a kernel-weighted lasso surrogate around `x` and keeps the
/// strongest features as interval rules.
pub fn lime_explain(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    x: &[f64],
    domains: &[FeatureDomain],
    config: &LimeConfig,
) -> Result<LocalExplanation, ExplainError> {
    let p = x.len();
    check_len(p, domains.len())?;
    if config.n_perturbations < 50 {
        return Err(ExplainError::InvalidConfig("n_perturbations must be >= 50".into()));
    }
    let width = config.kernel_width.unwrap_or(0.75 * (p as f64).sqrt());
    if !(width > 0.0) {
        return Err(ExplainError::InvalidConfig("kernel width must be positive".into()));
    }
    let nb = neighborhood(f, x, domains, config.n_perturbations, width, config.seed);
    let varies = (0..p).any(|j| nb.z.column(j).iter().any(|v| *v != x[j]));
    if !varies {
        return Err(ExplainError::DegenerateNeighborhood);
    }
    let g = fit_surrogate(&nb, config.lambda)?;

    let total: f64 = nb.weights.iter().sum();
    let mean = nb.fz.iter().zip(&nb.weights).map(|(y, w)| y * w).sum::<f64>() / total;
    let mut sse = 0.0;
    let mut sst = 0.0;
    let mut row = vec![0.0; p];
    for i in 0..nb.z.nrows() {
        for (j, r) in row.iter_mut().enumerate() {
            *r = nb.z[(i, j)];
        }
        sse += nb.weights[i] * (nb.fz[i] - g.predict_row(&row)).powi(2);
        sst += nb.weights[i] * (nb.fz[i] - mean).powi(2);
    }
    let r2 = if sst > 0.0 { 1.0 - sse / sst } else if sse <= 1e-24 { 1.0 } else { 0.0 };

    let mut order: Vec<usize> = (0..p).filter(|&j| g.weights[j] != 0.0).collect();
    order.sort_by(|&a, &b| {
        g.weights[b]
            .abs()
            .total_cmp(&g.weights[a].abs())
            .then_with(|| domains[a].name.cmp(&domains[b].name))
    });
    order.truncate(config.n_rules);
    let feature_rules = order
        .into_iter()
        .map(|j| {
            let q = quartiles(nb.z.column(j).iter().copied().collect());
            let (lower, upper, condition) = interval(&domains[j], x[j], q);
            Rule {
                feature: domains[j].name.clone(),
                condition,
                lower,
                upper,
                weight: g.weights[j],
            }
        })
        .collect();
    let lo = nb.fz.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = nb.fz.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(LocalExplanation {
        feature_rules,
        intercept: g.intercept,
        local_fidelity_r2: r2,
        prediction_range: [lo, hi],
        prediction: nb.fz[0],
        surrogate_prediction: g.predict_row(x),
        kernel_width: width,
        n_perturbations: config.n_perturbations,
    })
}

//! Linear structural equation model used to synthesize survey data with a
//! known causal graph. Each node's latent value is the weighted sum of its
//! parents plus independent noise; discretizers then map latents to raw
//! survey answers.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::NumericDataset;
use super::record::{RawValue, StudentRecord};
use super::DataError;
use crate::graph::{Dag, GraphError, WeightedDag};

const FIG3_SPEC: &str = include_str!("../../data/fig3_sem.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemEdge {
    pub from: String,
    pub to: String,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noise {
    Gaussian { sigma: f64 },
    Uniform { low: f64, high: f64 },
    Laplace { scale: f64 },
}

impl Noise {
    fn check(&self) -> bool {
        match *self {
            Noise::Gaussian { sigma } => sigma >= 0.0 && sigma.is_finite(),
            Noise::Uniform { low, high } => low <= high && low.is_finite() && high.is_finite(),
            Noise::Laplace { scale } => scale >= 0.0 && scale.is_finite(),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Noise::Gaussian { sigma } => {
                Normal::new(0.0, sigma).expect("checked sigma").sample(rng)
            }
            Noise::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            Noise::Laplace { scale } => {
                let u: f64 = rng.random::<f64>() - 0.5;
                -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
        }
    }
}

/// Maps a latent value to a raw survey answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Discretizer {
    /// Bin `k` (latent below `thresholds[k]`, or above the last) yields
    /// `levels[k]`. The level list may be in any order relative to the
    /// schema's declared order.
    Thresholds {
        thresholds: Vec<f64>,
        levels: Vec<String>,
    },
    /// `round(clamp(offset + scale * latent, min, max), decimals)`.
    Continuous {
        offset: f64,
        scale: f64,
        min: f64,
        max: f64,
        decimals: u32,
    },
}

impl Discretizer {
    fn check(&self, node: &str) -> Result<(), DataError> {
        match self {
            Discretizer::Thresholds { thresholds, levels } => {
                if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(DataError::Spec(format!(
                        "{node}: thresholds must be strictly increasing"
                    )));
                }
                if levels.len() != thresholds.len() + 1 {
                    return Err(DataError::Spec(format!(
                        "{node}: need one more level than thresholds"
                    )));
                }
            }
            Discretizer::Continuous { min, max, .. } => {
                if !(min < max) {
                    return Err(DataError::Spec(format!("{node}: min must be below max")));
                }
            }
        }
        Ok(())
    }

    fn apply(&self, latent: f64) -> RawValue {
        match self {
            Discretizer::Thresholds { thresholds, levels } => {
                let bin = thresholds.partition_point(|&t| t <= latent);
                RawValue::Text(levels[bin].clone())
            }
            Discretizer::Continuous {
                offset,
                scale,
                min,
                max,
                decimals,
            } => {
                let v = (offset + scale * latent).clamp(*min, *max);
                let p = 10f64.powi(*decimals as i32);
                RawValue::Number((v * p).round() / p)
            }
        }
    }
}

fn default_noise() -> Noise {
    Noise::Gaussian { sigma: 1.0 }
}

/// Ground-truth generator specification (JSON document).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemSpec {
    pub nodes: Vec<String>,
    pub edges: Vec<SemEdge>,
    /// Nodes not listed get standard Gaussian noise.
    #[serde(default)]
    pub noise: BTreeMap<String, Noise>,
    #[serde(default)]
    pub discretizers: BTreeMap<String, Discretizer>,
    pub seed: u64,
}

impl SemSpec {
    /// Survey topology with illustrative hand-chosen coefficients.
    pub fn fig3_default() -> Self {
        Self::from_json(FIG3_SPEC).expect("shipped SEM spec is valid")
    }

    pub fn fig3_json() -> &'static str {
        FIG3_SPEC
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let spec: SemSpec =
            serde_json::from_str(text).map_err(|e| DataError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn noise_for(&self, node: &str) -> Noise {
        self.noise.get(node).copied().unwrap_or_else(default_noise)
    }

    /// Ground-truth DAG (no weights).
    pub fn dag(&self) -> Result<Dag, DataError> {
        let edges: Vec<(&str, &str)> = self
            .edges
            .iter()
            .map(|e| (e.from.as_str(), e.to.as_str()))
            .collect();
        Dag::from_named_edges(self.nodes.clone(), &edges).map_err(|e| match e {
            GraphError::Cycle { .. } => DataError::CyclicSpec,
            other => DataError::Spec(other.to_string()),
        })
    }

    /// Weight matrix with `B[(child, parent)]`.
    pub fn weight_matrix(&self) -> Result<DMatrix<f64>, DataError> {
        let dag = self.dag()?;
        let n = self.nodes.len();
        let mut b = DMatrix::zeros(n, n);
        for e in &self.edges {
            let f = dag.index(&e.from).expect("validated");
            let t = dag.index(&e.to).expect("validated");
            b[(t, f)] = e.weight;
        }
        Ok(b)
    }

    pub fn truth(&self) -> Result<WeightedDag, DataError> {
        let b = self.weight_matrix()?;
        WeightedDag::from_matrix(self.nodes.clone(), b, 0.0)
            .map_err(|e| DataError::Spec(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), DataError> {
        self.dag()?;
        for e in &self.edges {
            if !e.weight.is_finite() {
                return Err(DataError::Spec(format!("{} -> {}: weight", e.from, e.to)));
            }
        }
        for (node, noise) in &self.noise {
            if !self.nodes.contains(node) {
                return Err(DataError::Spec(format!("noise for unknown node {node}")));
            }
            if !noise.check() {
                return Err(DataError::Spec(format!("{node}: invalid noise parameters")));
            }
        }
        for (node, d) in &self.discretizers {
            if !self.nodes.contains(node) {
                return Err(DataError::Spec(format!("discretizer for unknown node {node}")));
            }
            d.check(node)?;
        }
        Ok(())
    }
}

/// Output of [`generate_synthetic`].
#[derive(Debug, Clone)]
pub struct SyntheticData {
    /// Raw answers after discretization (numbers for undiscretized nodes).
    pub records: Vec<StudentRecord>,
    /// Latent values, one unscaled continuous column per node.
    pub latent: NumericDataset,
    pub truth: WeightedDag,
}

/// Samples `n` rows from `spec`. Identical `(spec, n)` gives bit-identical
/// output.
pub fn generate_synthetic(spec: &SemSpec, n: usize) -> Result<SyntheticData, DataError> {
    if n == 0 {
        return Err(DataError::Empty);
    }
    spec.validate()?;
    let dag = spec.dag()?;
    let b = spec.weight_matrix()?;
    let order = dag.topological_order().ok_or(DataError::CyclicSpec)?;
    let p = spec.nodes.len();
    let noises: Vec<Noise> = spec.nodes.iter().map(|v| spec.noise_for(v)).collect();
    let parents: Vec<Vec<usize>> = (0..p).map(|v| dag.parents(v)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut latent = DMatrix::zeros(n, p);
    for i in 0..n {
        for &v in &order {
            let signal: f64 = parents[v].iter().map(|&u| b[(v, u)] * latent[(i, u)]).sum();
            latent[(i, v)] = signal + noises[v].sample(&mut rng);
        }
    }

    let records = (0..n)
        .map(|i| {
            let mut rec = StudentRecord::new();
            for (v, name) in spec.nodes.iter().enumerate() {
                let x = latent[(i, v)];
                let raw = match spec.discretizers.get(name) {
                    Some(d) => d.apply(x),
                    None => RawValue::Number(x),
                };
                rec.values.insert(name.clone(), raw);
            }
            rec
        })
        .collect();

    Ok(SyntheticData {
        records,
        latent: NumericDataset::from_matrix(spec.nodes.clone(), latent)?,
        truth: spec.truth()?,
    })
}

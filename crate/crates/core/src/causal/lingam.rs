use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{CausalError, DEFAULT_PRUNE_THRESHOLD};
use crate::data::NumericDataset;
use crate::graph::WeightedDag;

/// Nodes up to this count get exhaustive permutation searches.
const EXHAUSTIVE_MAX: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct LingamConfig {
    pub prune_threshold: f64,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    /// Re-estimate weights by least squares on the recovered causal order.
    pub refit: bool,
}

impl Default for LingamConfig {
    fn default() -> Self {
        Self {
            prune_threshold: DEFAULT_PRUNE_THRESHOLD,
            seed: 0,
            max_iters: 1000,
            tol: 1e-8,
            refit: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IcaResult {
    /// Unmixing matrix: sources are `W (x - mean)`.
    pub unmixing: DMatrix<f64>,
    pub iterations: usize,
}

fn inv_sqrt_sym(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().any(|&l| !(l > 1e-300)) {
        return None;
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Some(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

fn decorrelate(w: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    Some(inv_sqrt_sym(&(w * w.transpose()))? * w)
}

/// Symmetric FastICA with the `tanh` contrast on an `n x p` data matrix.
pub fn fast_ica(
    x: &DMatrix<f64>,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<IcaResult, CausalError> {
    let (n, p) = x.shape();
    if n <= p {
        return Err(CausalError::TooFewSamples { n, p });
    }
    let means = x.row_mean();
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        row -= &means;
    }
    let cov = xc.transpose() * &xc / n as f64;
    let singular = || CausalError::SingularRegression("covariance".into());
    let k = inv_sqrt_sym(&cov).ok_or_else(singular)?;
    let z = &xc * &k;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = DMatrix::from_fn(p, p, |_, _| StandardNormal.sample(&mut rng));
    let mut w = decorrelate(&init).ok_or_else(singular)?;
    for it in 1..=max_iters {
        let g = (&z * w.transpose()).map(f64::tanh);
        let gp_mean = DVector::from_fn(p, |j, _| {
            g.column(j).iter().map(|v| 1.0 - v * v).sum::<f64>() / n as f64
        });
        let next = g.transpose() * &z / n as f64 - DMatrix::from_diagonal(&gp_mean) * &w;
        let next = decorrelate(&next).ok_or_else(singular)?;
        let lim = (&next * w.transpose())
            .diagonal()
            .iter()
            .map(|d| (d.abs() - 1.0).abs())
            .fold(0.0, f64::max);
        w = next;
        if lim < tol {
            return Ok(IcaResult {
                unmixing: &w * &k,
                iterations: it,
            });
        }
    }
    Err(CausalError::IcaNonConvergence(max_iters))
}

fn permutations(p: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; p], &mut out);
    out
}

/// `assign[i]` is the unmixing row placed at position `i`, chosen to
/// minimize `sum 1 / |W[assign[i], i]|`.
fn diagonal_assignment(w: &DMatrix<f64>) -> Vec<usize> {
    let p = w.nrows();
    let cost = |r: usize, c: usize| 1.0 / w[(r, c)].abs().max(1e-300);
    if p <= EXHAUSTIVE_MAX {
        let mut best = (f64::INFINITY, (0..p).collect::<Vec<_>>());
        for perm in permutations(p) {
            let c: f64 = perm.iter().enumerate().map(|(i, &r)| cost(r, i)).sum();
            if c < best.0 {
                best = (c, perm);
            }
        }
        return best.1;
    }
    let mut assign = vec![usize::MAX; p];
    let mut row_used = vec![false; p];
    for _ in 0..p {
        let mut best = (f64::INFINITY, 0, 0);
        for r in (0..p).filter(|&r| !row_used[r]) {
            for c in (0..p).filter(|&c| assign[c] == usize::MAX) {
                if cost(r, c) < best.0 {
                    best = (cost(r, c), r, c);
                }
            }
        }
        row_used[best.1] = true;
        assign[best.2] = best.1;
    }
    assign
}

/// Causal order making `B` as close as possible to strictly lower
/// triangular (parents before children).
fn causal_order(b: &DMatrix<f64>) -> Vec<usize> {
    let p = b.nrows();
    if p <= EXHAUSTIVE_MAX {
        let mut best = (f64::INFINITY, (0..p).collect::<Vec<_>>());
        for perm in permutations(p) {
            let mut upper = 0.0;
            for i in 0..p {
                for j in i..p {
                    upper += b[(perm[i], perm[j])].powi(2);
                }
            }
            if upper < best.0 {
                best = (upper, perm);
            }
        }
        return best.1;
    }
    // Next in order is the remaining node least explained by the others.
    let mut remaining: Vec<usize> = (0..p).collect();
    let mut order = Vec::with_capacity(p);
    while !remaining.is_empty() {
        let (pos, _) = remaining
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let s: f64 = remaining.iter().filter(|&&j| j != i).map(|&j| b[(i, j)].powi(2)).sum();
                (k, s)
            })
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        order.push(remaining.remove(pos));
    }
    order
}

/// Least-squares coefficients of every node on its predecessors in `order`.
fn refit_on_order(x: &DMatrix<f64>, order: &[usize]) -> Result<DMatrix<f64>, CausalError> {
    let (n, p) = x.shape();
    let means = x.row_mean();
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        row -= &means;
    }
    let cov = xc.transpose() * &xc / n as f64;
    let mut b = DMatrix::zeros(p, p);
    for (k, &v) in order.iter().enumerate() {
        let pred = &order[..k];
        if pred.is_empty() {
            continue;
        }
        let m = pred.len();
        let spp = DMatrix::from_fn(m, m, |a, c| cov[(pred[a], pred[c])]);
        let spv = DVector::from_fn(m, |a, _| cov[(pred[a], v)]);
        let beta = spp
            .cholesky()
            .ok_or_else(|| CausalError::SingularRegression(format!("column {v}")))?
            .solve(&spv);
        for (a, &u) in pred.iter().enumerate() {
            b[(v, u)] = beta[a];
        }
    }
    Ok(b)
}

/// ICA-LiNGAM with default settings and the given pruning threshold.
pub fn ica_lingam(ds: &NumericDataset, prune_threshold: f64) -> Result<WeightedDag, CausalError> {
    ica_lingam_with(
        ds,
        &LingamConfig {
            prune_threshold,
            ..LingamConfig::default()
        },
    )
}

/// Estimates `B` in `x = B x + e` assuming non-Gaussian independent noise.
/// Weights are in the units of the dataset columns.
pub fn ica_lingam_with(ds: &NumericDataset, cfg: &LingamConfig) -> Result<WeightedDag, CausalError> {
    if !(cfg.prune_threshold >= 0.0) {
        return Err(CausalError::InvalidArgument("prune_threshold must be >= 0".into()));
    }
    let x = ds.matrix();
    let p = x.ncols();
    let ica = fast_ica(x, cfg.seed, cfg.max_iters, cfg.tol)?;
    let w = ica.unmixing;
    let assign = diagonal_assignment(&w);
    let mut wp = DMatrix::from_fn(p, p, |i, j| w[(assign[i], j)]);
    for i in 0..p {
        let d = wp[(i, i)];
        wp.row_mut(i).apply(|v| *v /= d);
    }
    let b_ica = DMatrix::identity(p, p) - wp;
    let order = causal_order(&b_ica);

    let mut b = if cfg.refit {
        refit_on_order(x, &order)?
    } else {
        let mut pos = vec![0; p];
        for (k, &v) in order.iter().enumerate() {
            pos[v] = k;
        }
        DMatrix::from_fn(p, p, |i, j| if pos[j] < pos[i] { b_ica[(i, j)] } else { 0.0 })
    };
    b.apply(|v| {
        if v.abs() < cfg.prune_threshold {
            *v = 0.0
        }
    });
    Ok(WeightedDag::from_matrix(ds.column_names(), b, cfg.prune_threshold)?)
}

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ModelError;

/// Penalty on the weights (never the intercept). The objective is
/// `1/2 sum_i s_i r_i^2 + lambda * (mix * |w|_1 + (1 - mix) / 2 * |w|_2^2)`
/// with sample weights `s_i` (1 by default): ridge is `mix = 0`, lasso
/// `mix = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Penalty {
    None,
    Ridge { lambda: f64 },
    Lasso { lambda: f64 },
    ElasticNet { lambda: f64, mix: f64 },
}

impl Penalty {
    pub fn name(&self) -> &'static str {
        match self {
            Penalty::None => "ols",
            Penalty::Ridge { .. } => "ridge",
            Penalty::Lasso { .. } => "lasso",
            Penalty::ElasticNet { .. } => "elastic_net",
        }
    }

    /// `(lambda, mix)`.
    pub fn parts(&self) -> (f64, f64) {
        match *self {
            Penalty::None => (0.0, 0.0),
            Penalty::Ridge { lambda } => (lambda, 0.0),
            Penalty::Lasso { lambda } => (lambda, 1.0),
            Penalty::ElasticNet { lambda, mix } => (lambda, mix),
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        let (lambda, mix) = self.parts();
        if !(lambda >= 0.0 && lambda.is_finite()) || !(0.0..=1.0).contains(&mix) {
            return Err(ModelError::InvalidConfig(format!("bad penalty {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub penalty: Penalty,
    /// Features whose weight the L1 term set to exactly zero.
    #[serde(default)]
    pub excluded: Vec<usize>,
}

impl LinearModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.weights.len(), "feature count mismatch");
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once no coordinate moves by more than this in a sweep...
    pub tol: f64,
    /// ...and the optimality conditions hold to this absolute tolerance.
    pub kkt_tol: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            kkt_tol: 1e-8,
            max_sweeps: 10_000,
        }
    }
}

pub fn fit_linear_family(
    x: &DMatrix<f64>,
    y: &[f64],
    penalty: Penalty,
) -> Result<LinearModel, ModelError> {
    fit_linear_weighted(x, y, None, penalty, &SolverOptions::default())
}

struct Centered {
    xc: DMatrix<f64>,
    yc: DVector<f64>,
    x_mean: DVector<f64>,
    y_mean: f64,
    s: DVector<f64>,
}

fn center(x: &DMatrix<f64>, y: &[f64], weights: Option<&[f64]>) -> Result<Centered, ModelError> {
    let (n, p) = x.shape();
    if n == 0 {
        return Err(ModelError::EmptyData);
    }
    if y.len() != n {
        return Err(ModelError::LengthMismatch(n, y.len()));
    }
    let s = match weights {
        Some(w) if w.len() != n => return Err(ModelError::LengthMismatch(n, w.len())),
        Some(w) if w.iter().any(|v| !(*v >= 0.0)) => {
            return Err(ModelError::InvalidConfig("negative sample weight".into()))
        }
        Some(w) => DVector::from_column_slice(w),
        None => DVector::from_element(n, 1.0),
    };
    let total = s.sum();
    if !(total > 0.0) {
        return Err(ModelError::EmptyData);
    }
    let y_mean = y.iter().zip(s.iter()).map(|(a, b)| a * b).sum::<f64>() / total;
    let x_mean = DVector::from_fn(p, |j, _| x.column(j).dot(&s) / total);
    let mut xc = x.clone();
    for j in 0..p {
        let m = x_mean[j];
        xc.column_mut(j).apply(|v| *v -= m);
    }
    let yc = DVector::from_fn(n, |i, _| y[i] - y_mean);
    Ok(Centered {
        xc,
        yc,
        x_mean,
        y_mean,
        s,
    })
}

/// Fits with optional sample weights. OLS and ridge solve the normal
/// equations; penalties with an L1 part use cyclic coordinate descent.
pub fn fit_linear_weighted(
    x: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    penalty: Penalty,
    opts: &SolverOptions,
) -> Result<LinearModel, ModelError> {
    penalty.validate()?;
    let c = center(x, y, weights)?;
    let beta = match penalty {
        Penalty::None | Penalty::Ridge { .. } => normal_equations(&c, penalty.parts().0)?,
        _ => coordinate_descent(&c, penalty.parts(), opts)?,
    };
    let intercept = c.y_mean - beta.dot(&c.x_mean);
    let excluded = if penalty.parts().1 > 0.0 {
        (0..beta.len()).filter(|&j| beta[j] == 0.0).collect()
    } else {
        Vec::new()
    };
    Ok(LinearModel {
        weights: beta.iter().copied().collect(),
        intercept,
        penalty,
        excluded,
    })
}

fn weighted_gram(c: &Centered) -> DMatrix<f64> {
    let mut sx = c.xc.clone();
    for (i, mut row) in sx.row_iter_mut().enumerate() {
        row *= c.s[i];
    }
    c.xc.transpose() * sx
}

fn normal_equations(c: &Centered, lambda: f64) -> Result<DVector<f64>, ModelError> {
    let p = c.xc.ncols();
    let mut a = weighted_gram(c);
    for j in 0..p {
        a[(j, j)] += lambda;
    }
    let b = c.xc.transpose() * c.yc.component_mul(&c.s);
    let scale = a.diagonal().max().max(f64::MIN_POSITIVE);
    let chol = a.cholesky().ok_or(ModelError::SingularSystem)?;
    if chol.l_dirty().diagonal().iter().any(|d| d * d <= 1e-12 * scale) {
        return Err(ModelError::SingularSystem);
    }
    Ok(chol.solve(&b))
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Largest violation of the optimality conditions at `beta` for centered
/// data: `g_j = -x_j' S r + lambda (1 - mix) beta_j` must equal
/// `-lambda mix sign(beta_j)` when `beta_j != 0` and lie in
/// `[-lambda mix, lambda mix]` otherwise.
fn kkt_centered(c: &Centered, beta: &DVector<f64>, lambda: f64, mix: f64) -> f64 {
    let r = &c.yc - &c.xc * beta;
    let sr = r.component_mul(&c.s);
    let l1 = lambda * mix;
    (0..beta.len())
        .map(|j| {
            let g = -c.xc.column(j).dot(&sr) + lambda * (1.0 - mix) * beta[j];
            if beta[j] != 0.0 {
                (g + l1 * beta[j].signum()).abs()
            } else {
                (g.abs() - l1).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// KKT violation of a fitted model on uncentered data (intercept included
/// as an unpenalized coordinate).
pub fn kkt_violation(
    x: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    model: &LinearModel,
) -> Result<f64, ModelError> {
    let c = center(x, y, weights)?;
    let beta = DVector::from_column_slice(&model.weights);
    let (lambda, mix) = model.penalty.parts();
    // Intercept stationarity: weighted residual sum must vanish.
    let resid: f64 = (0..x.nrows())
        .map(|i| {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            c.s[i] * (y[i] - model.predict_row(&row))
        })
        .sum();
    Ok(kkt_centered(&c, &beta, lambda, mix).max(resid.abs()))
}

fn coordinate_descent(
    c: &Centered,
    (lambda, mix): (f64, f64),
    opts: &SolverOptions,
) -> Result<DVector<f64>, ModelError> {
    let p = c.xc.ncols();
    let z: Vec<f64> = (0..p)
        .map(|j| c.xc.column(j).iter().zip(c.s.iter()).map(|(v, s)| s * v * v).sum())
        .collect();
    let l1 = lambda * mix;
    let l2 = lambda * (1.0 - mix);
    let mut beta = DVector::zeros(p);
    let mut r = c.yc.clone();
    for _ in 0..opts.max_sweeps {
        let mut max_delta: f64 = 0.0;
        for j in 0..p {
            if z[j] == 0.0 {
                continue;
            }
            let col = c.xc.column(j);
            let rho: f64 = col
                .iter()
                .zip(r.iter())
                .zip(c.s.iter())
                .map(|((x, r), s)| s * x * r)
                .sum::<f64>()
                + z[j] * beta[j];
            let new = soft_threshold(rho, l1) / (z[j] + l2);
            let delta: f64 = new - beta[j];
            if delta != 0.0 {
                r.axpy(-delta, &col, 1.0);
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < opts.tol && kkt_centered(c, &beta, lambda, mix) < opts.kkt_tol {
            return Ok(beta);
        }
    }
    Err(ModelError::NonConvergence(opts.max_sweeps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn problem(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let y = (0..n)
            .map(|i| {
                let e: f64 = StandardNormal.sample(&mut rng);
                1.0 + 2.0 * x[(i, 0)] - x[(i, 1 % p)] + 0.5 * e
            })
            .collect();
        (x, y)
    }

    #[test]
    fn exact_line() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let y = [2.0, 4.0, 6.0, 8.0];
        let m = fit_linear_family(&x, &y, Penalty::None).unwrap();
        assert!((m.weights[0] - 2.0).abs() < 1e-10);
        assert!(m.intercept.abs() < 1e-10);
    }

    #[test]
    fn huge_ridge_penalty() {
        let (x, y) = problem(50, 3, 1);
        let m = fit_linear_family(&x, &y, Penalty::Ridge { lambda: 1e9 }).unwrap();
        let mean = y.iter().sum::<f64>() / 50.0;
        assert!(m.weights.iter().all(|w| w.abs() < 1e-6));
        assert!((m.intercept - mean).abs() < 1e-6);
    }

    #[test]
    fn collinear_ols_is_singular() {
        let x = DMatrix::from_fn(10, 2, |i, _| i as f64);
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(fit_linear_family(&x, &y, Penalty::None), Err(ModelError::SingularSystem));
        assert!(fit_linear_family(&x, &y, Penalty::Ridge { lambda: 1.0 }).is_ok());
    }

    #[test]
    fn lasso_zeroes_noise_features() {
        let (x, y) = problem(200, 6, 2);
        let m = fit_linear_family(&x, &y, Penalty::Lasso { lambda: 40.0 }).unwrap();
        assert!(m.weights[0] > 1.0);
        assert!(!m.excluded.is_empty());
        assert!(m.excluded.iter().all(|&j| m.weights[j] == 0.0));
    }

    #[test]
    fn elastic_net_endpoints() {
        let (x, y) = problem(120, 5, 3);
        let lam = 7.0;
        let ridge = fit_linear_family(&x, &y, Penalty::Ridge { lambda: lam }).unwrap();
        let en0 = fit_linear_family(&x, &y, Penalty::ElasticNet { lambda: lam, mix: 0.0 }).unwrap();
        let lasso = fit_linear_family(&x, &y, Penalty::Lasso { lambda: lam }).unwrap();
        let en1 = fit_linear_family(&x, &y, Penalty::ElasticNet { lambda: lam, mix: 1.0 }).unwrap();
        for j in 0..5 {
            assert!((ridge.weights[j] - en0.weights[j]).abs() < 1e-6);
            assert!((lasso.weights[j] - en1.weights[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn weights_equal_row_replication() {
        let (x, y) = problem(30, 3, 4);
        let mut w = vec![1.0; 30];
        w[0] = 3.0;
        let weighted = fit_linear_weighted(&x, &y, Some(&w), Penalty::Lasso { lambda: 2.0 }, &SolverOptions::default()).unwrap();
        let mut xr = x.clone().insert_rows(30, 2, 0.0);
        let mut yr = y.clone();
        for k in 0..2 {
            for j in 0..3 {
                xr[(30 + k, j)] = x[(0, j)];
            }
            yr.push(y[0]);
        }
        let replicated = fit_linear_family(&xr, &yr, Penalty::Lasso { lambda: 2.0 }).unwrap();
        for j in 0..3 {
            assert!((weighted.weights[j] - replicated.weights[j]).abs() < 1e-6);
        }
        assert!((weighted.intercept - replicated.intercept).abs() < 1e-6);
    }

    #[test]
    fn ridge_shrinks_monotonically() {
        let (x, y) = problem(80, 4, 5);
        let mut last = f64::INFINITY;
        for lam in [0.0, 0.5, 2.0, 10.0, 100.0, 1000.0] {
            let m = fit_linear_family(&x, &y, Penalty::Ridge { lambda: lam }).unwrap();
            let norm = m.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
            assert!(norm <= last + 1e-12);
            last = norm;
        }
    }

    #[test]
    fn lasso_sparsity_non_increasing() {
        let (x, y) = problem(100, 8, 6);
        let mut last = usize::MAX;
        for k in 0..10 {
            let lam = 0.5 * 2f64.powi(k);
            let m = fit_linear_family(&x, &y, Penalty::Lasso { lambda: lam }).unwrap();
            let nz = m.weights.iter().filter(|w| **w != 0.0).count();
            assert!(nz <= last, "lambda {lam}");
            last = nz;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn solutions_satisfy_kkt(seed in 0u64..1000, lam in 0.1f64..50.0, mix in 0.0f64..=1.0) {
            let (x, y) = problem(60, 4, seed);
            let m = fit_linear_family(&x, &y, Penalty::ElasticNet { lambda: lam, mix }).unwrap();
            prop_assert!(kkt_violation(&x, &y, None, &m).unwrap() < 1e-6);
        }
    }
}

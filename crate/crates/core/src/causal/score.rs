use std::cell::RefCell;
use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::CausalError;
use crate::data::NumericDataset;
use crate::graph::Dag;

/// Decomposable Gaussian BIC over a fixed dataset. Local scores are cached
/// by `(node, sorted parents)`.
///
/// `local(v, pa) = -n/2 * (ln(2 pi s2) + 1) - k/2 * ln n` with `s2` the
/// maximum-likelihood residual variance of `v` on `pa` and `k = |pa| + 2`
/// (coefficients, intercept and variance).
#[derive(Debug)]
pub struct BicScorer {
    names: Vec<String>,
    cov: DMatrix<f64>,
    n: usize,
    cache: RefCell<HashMap<(usize, Vec<usize>), f64>>,
}

impl BicScorer {
    pub fn new(ds: &NumericDataset) -> Result<Self, CausalError> {
        let (n, p) = (ds.n_rows(), ds.n_cols());
        if n < 2 {
            return Err(CausalError::TooFewSamples { n, p });
        }
        let m = ds.matrix();
        let means = m.row_mean();
        let mut c = m.clone();
        for mut row in c.row_iter_mut() {
            row -= &means;
        }
        let cov = (c.transpose() * &c) / n as f64;
        Ok(Self {
            names: ds.column_names(),
            cov,
            n,
            cache: RefCell::new(HashMap::new()),
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn local(&self, node: usize, parents: &[usize]) -> Result<f64, CausalError> {
        let mut pa = parents.to_vec();
        pa.sort_unstable();
        if let Some(&s) = self.cache.borrow().get(&(node, pa.clone())) {
            return Ok(s);
        }
        let s2 = self.residual_variance(node, &pa)?;
        let n = self.n as f64;
        let k = (pa.len() + 2) as f64;
        let score = -0.5 * n * ((2.0 * std::f64::consts::PI * s2).ln() + 1.0) - 0.5 * k * n.ln();
        self.cache.borrow_mut().insert((node, pa), score);
        Ok(score)
    }

    fn residual_variance(&self, v: usize, pa: &[usize]) -> Result<f64, CausalError> {
        let svv = self.cov[(v, v)];
        let s2 = if pa.is_empty() {
            svv
        } else {
            let k = pa.len();
            let spp = DMatrix::from_fn(k, k, |a, b| self.cov[(pa[a], pa[b])]);
            let spv = DVector::from_fn(k, |a, _| self.cov[(pa[a], v)]);
            let singular = || CausalError::SingularRegression(self.names[v].clone());
            let scale = spp.diagonal().max();
            let chol = spp.cholesky().ok_or_else(singular)?;
            if chol.l_dirty().diagonal().iter().any(|d| d * d <= 1e-12 * scale) {
                return Err(singular());
            }
            svv - spv.dot(&chol.solve(&spv))
        };
        if !(s2 > 0.0) || !s2.is_finite() {
            return Err(CausalError::SingularRegression(self.names[v].clone()));
        }
        Ok(s2)
    }

    /// Total score of a DAG whose nodes are indexed like the dataset columns.
    pub fn score(&self, dag: &Dag) -> Result<f64, CausalError> {
        (0..dag.n_nodes())
            .map(|v| self.local(v, &dag.parents(v)))
            .sum()
    }
}

/// BIC of `dag` on `ds`; DAG nodes are matched to columns by name.
pub fn bic_score(ds: &NumericDataset, dag: &Dag) -> Result<f64, CausalError> {
    let names = dag.nodes().to_vec();
    let sub = ds.select_columns(&names)?;
    BicScorer::new(&sub)?.score(dag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SemEdge, SemSpec};
    use std::collections::BTreeMap;

    fn two_node(n: usize) -> NumericDataset {
        let spec = SemSpec {
            nodes: vec!["X".into(), "Y".into()],
            edges: vec![SemEdge { from: "X".into(), to: "Y".into(), weight: 0.8 }],
            noise: BTreeMap::new(),
            discretizers: BTreeMap::new(),
            seed: 11,
        };
        generate_synthetic(&spec, n).unwrap().latent
    }

    fn standardized(ds: &NumericDataset) -> NumericDataset {
        let mut m = ds.matrix().clone();
        for mut col in m.column_iter_mut() {
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            col.apply(|x| *x = (*x - mean) / sd);
        }
        NumericDataset::from_matrix(ds.column_names(), m).unwrap()
    }

    #[test]
    fn empty_graph_closed_form() {
        let ds = standardized(&two_node(3000));
        let dag = Dag::new(ds.column_names()).unwrap();
        let (n, p) = (3000.0_f64, 2.0);
        let expected = -n * p / 2.0 * ((2.0 * std::f64::consts::PI).ln() + 1.0) - p * n.ln();
        let got = bic_score(&ds, &dag).unwrap();
        assert!(((got - expected) / expected).abs() < 0.01, "{got} vs {expected}");
    }

    #[test]
    fn true_edge_beats_empty_graph() {
        let ds = two_node(2000);
        let empty = Dag::new(ds.column_names()).unwrap();
        let full = Dag::from_named_edges(ds.column_names(), &[("X", "Y")]).unwrap();
        assert!(bic_score(&ds, &full).unwrap() > bic_score(&ds, &empty).unwrap());
    }

    #[test]
    fn markov_equivalent_graphs_score_equal() {
        let ds = two_node(1000);
        let xy = Dag::from_named_edges(ds.column_names(), &[("X", "Y")]).unwrap();
        let yx = Dag::from_named_edges(ds.column_names(), &[("Y", "X")]).unwrap();
        let (a, b) = (bic_score(&ds, &xy).unwrap(), bic_score(&ds, &yx).unwrap());
        assert!((a - b).abs() < 1e-6 * a.abs());
    }

    #[test]
    fn local_score_matches_ols_residuals() {
        let ds = two_node(500);
        let x = ds.column(0);
        let y = ds.column(1);
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let beta = sxy / sxx;
        let rss: f64 = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (b - my - beta * (a - mx)).powi(2))
            .sum();
        let s2 = rss / n;
        let expected = -0.5 * n * ((2.0 * std::f64::consts::PI * s2).ln() + 1.0) - 1.5 * n.ln();
        let got = BicScorer::new(&ds).unwrap().local(1, &[0]).unwrap();
        assert!((got - expected).abs() < 1e-8 * expected.abs());
    }

    #[test]
    fn duplicate_column_is_singular() {
        let ds = two_node(100);
        let m = DMatrix::from_fn(100, 3, |i, j| ds.matrix()[(i, j.min(1))]);
        let ds = NumericDataset::from_matrix(vec!["X".into(), "Y".into(), "Y2".into()], m).unwrap();
        let s = BicScorer::new(&ds).unwrap();
        assert!(matches!(s.local(0, &[1, 2]), Err(CausalError::SingularRegression(_))));
    }
}

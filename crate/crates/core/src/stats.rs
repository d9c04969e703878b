//! Descriptive statistics, crosstabs, (partial) correlation and the Fisher-z
//! conditional independence test.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::data::{DataError, FactorKind, NumericDataset};

/// Significance level used when a caller does not pick one.
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("{0} is continuous; crosstabs need coded factors")]
    ContinuousFactor(String),
    #[error("covariance submatrix is singular")]
    SingularCovariance,
    #[error("too few samples: n={n}, conditioning set size {z_dim}")]
    TooFewSamples { n: usize, z_dim: usize },
    #[error("correlation {0} outside [-1, 1]")]
    InvalidCorrelation(f64),
    #[error("empty dataset")]
    Empty,
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub name: String,
    pub count: usize,
    pub unique: usize,
    pub mode: f64,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

/// Per-column summary. `sd` is the sample standard deviation (0 for a
/// single row); mode ties go to the first value seen.
pub fn describe(ds: &NumericDataset) -> Result<Vec<ColumnSummary>, StatsError> {
    if ds.n_rows() == 0 {
        return Err(StatsError::Empty);
    }
    Ok(ds
        .columns()
        .iter()
        .enumerate()
        .map(|(j, meta)| summarize(&meta.name, &ds.column(j)))
        .collect())
}

fn summarize(name: &str, col: &[f64]) -> ColumnSummary {
    let n = col.len();
    let mut counts: HashMap<u64, (usize, usize)> = HashMap::new();
    for (i, v) in col.iter().enumerate() {
        counts.entry(v.to_bits()).or_insert((0, i)).0 += 1;
    }
    let (&mode_bits, _) = counts
        .iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .expect("non-empty column");
    let mean = col.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    ColumnSummary {
        name: name.to_string(),
        count: n,
        unique: counts.len(),
        mode: f64::from_bits(mode_bits),
        mean,
        sd,
        min: col.iter().copied().fold(f64::INFINITY, f64::min),
        max: col.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrosstabCell {
    pub count: usize,
    pub row_pct: f64,
    pub col_pct: f64,
    pub total_pct: f64,
}

/// Contingency table over the observed levels of two coded factors. Rows
/// and columns follow encoding order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstabReport {
    pub row_factor: String,
    pub col_factor: String,
    pub row_levels: Vec<String>,
    pub col_levels: Vec<String>,
    pub cells: Vec<Vec<CrosstabCell>>,
    pub n: usize,
}

impl CrosstabReport {
    /// Aligned plain-text rendering (counts with total percentages).
    pub fn to_text(&self) -> String {
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut head = vec![format!("{} \\ {}", self.row_factor, self.col_factor)];
        head.extend(self.col_levels.iter().cloned());
        rows.push(head);
        for (r, label) in self.row_levels.iter().enumerate() {
            let mut line = vec![label.clone()];
            for c in &self.cells[r] {
                line.push(format!("{} ({:.2}%)", c.count, c.total_pct));
            }
            rows.push(line);
        }
        crate::report::align(&rows)
    }
}

fn coded_levels(ds: &NumericDataset, j: usize) -> Result<(Vec<i64>, Vec<String>), StatsError> {
    let meta = &ds.columns()[j];
    if meta.kind == FactorKind::Continuous && !ds.encoding_map().contains_key(&meta.name) {
        return Err(StatsError::ContinuousFactor(meta.name.clone()));
    }
    let codes: Vec<i64> = ds
        .column(j)
        .iter()
        .map(|&v| meta.scaling.invert(v).round() as i64)
        .collect();
    let names = ds.encoding_map().get(&meta.name);
    let observed: BTreeMap<i64, String> = codes
        .iter()
        .map(|&c| {
            let label = names
                .and_then(|l| l.get(c as usize))
                .cloned()
                .unwrap_or_else(|| c.to_string());
            (c, label)
        })
        .collect();
    let order: Vec<i64> = observed.keys().copied().collect();
    let idx: Vec<i64> = codes
        .iter()
        .map(|c| order.binary_search(c).expect("observed") as i64)
        .collect();
    Ok((idx, observed.into_values().collect()))
}

pub fn crosstab(
    ds: &NumericDataset,
    row_factor: &str,
    col_factor: &str,
) -> Result<CrosstabReport, StatsError> {
    if ds.n_rows() == 0 {
        return Err(StatsError::Empty);
    }
    let (r_idx, row_levels) = coded_levels(ds, ds.column_index(row_factor)?)?;
    let (c_idx, col_levels) = coded_levels(ds, ds.column_index(col_factor)?)?;
    let mut counts = vec![vec![0usize; col_levels.len()]; row_levels.len()];
    for (&r, &c) in r_idx.iter().zip(&c_idx) {
        counts[r as usize][c as usize] += 1;
    }
    let n = ds.n_rows();
    let row_tot: Vec<usize> = counts.iter().map(|r| r.iter().sum()).collect();
    let col_tot: Vec<usize> = (0..col_levels.len())
        .map(|c| counts.iter().map(|r| r[c]).sum())
        .collect();
    let pct = |a: usize, b: usize| if b == 0 { 0.0 } else { 100.0 * a as f64 / b as f64 };
    let cells = counts
        .iter()
        .enumerate()
        .map(|(r, row)| {
            row.iter()
                .enumerate()
                .map(|(c, &count)| CrosstabCell {
                    count,
                    row_pct: pct(count, row_tot[r]),
                    col_pct: pct(count, col_tot[c]),
                    total_pct: pct(count, n),
                })
                .collect()
        })
        .collect();
    Ok(CrosstabReport {
        row_factor: row_factor.to_string(),
        col_factor: col_factor.to_string(),
        row_levels,
        col_levels,
        cells,
        n,
    })
}

/// Sample covariance matrix (n - 1 denominator).
pub fn covariance(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let means = m.row_mean();
    let mut centered = m.clone();
    for mut row in centered.row_iter_mut() {
        row -= &means;
    }
    (centered.transpose() * &centered) / (n.max(2) - 1) as f64
}

/// Partial correlation of `i` and `j` given `cond`, from a covariance
/// matrix, via the inverse of the selected submatrix.
pub fn partial_correlation_from_cov(
    cov: &DMatrix<f64>,
    i: usize,
    j: usize,
    cond: &[usize],
) -> Result<f64, StatsError> {
    if cond.is_empty() {
        let d = cov[(i, i)] * cov[(j, j)];
        if d <= 0.0 {
            return Err(StatsError::SingularCovariance);
        }
        return Ok((cov[(i, j)] / d.sqrt()).clamp(-1.0, 1.0));
    }
    let idx: Vec<usize> = [i, j].into_iter().chain(cond.iter().copied()).collect();
    let k = idx.len();
    let sub = DMatrix::from_fn(k, k, |a, b| cov[(idx[a], idx[b])]);
    let prec = sub
        .cholesky()
        .ok_or(StatsError::SingularCovariance)?
        .inverse();
    let d = prec[(0, 0)] * prec[(1, 1)];
    if !(d > 0.0) || !d.is_finite() {
        return Err(StatsError::SingularCovariance);
    }
    Ok((-prec[(0, 1)] / d.sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation matrix of the dataset columns. Constant columns
/// give `NaN` off the diagonal.
pub fn correlation_matrix(ds: &NumericDataset) -> Result<DMatrix<f64>, StatsError> {
    if ds.n_rows() < 2 {
        return Err(StatsError::Empty);
    }
    let cov = covariance(ds.matrix());
    let p = cov.nrows();
    Ok(DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            (cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt()).clamp(-1.0, 1.0)
        }
    }))
}

/// Partial correlation of two columns given a conditioning set. With an
/// empty set this is the Pearson correlation.
pub fn partial_correlation(
    ds: &NumericDataset,
    i: &str,
    j: &str,
    cond: &[&str],
) -> Result<f64, StatsError> {
    if cond.len() + 3 > ds.n_rows() {
        return Err(StatsError::TooFewSamples {
            n: ds.n_rows(),
            z_dim: cond.len(),
        });
    }
    let names: Vec<String> = [i, j]
        .into_iter()
        .chain(cond.iter().copied())
        .map(String::from)
        .collect();
    let sub = ds.select_columns(&names)?;
    let cov = covariance(sub.matrix());
    let cond_idx: Vec<usize> = (2..names.len()).collect();
    partial_correlation_from_cov(&cov, 0, 1, &cond_idx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiResult {
    pub statistic: f64,
    pub p_value: f64,
    pub independent: bool,
    pub cond_set: Vec<String>,
}

/// Two-sided Fisher-z test of zero (partial) correlation:
/// `statistic = sqrt(n - z_dim - 3) * atanh(r)`. Correlations of exactly
/// ±1 are nudged inside the open interval so the statistic stays finite.
pub fn fisher_z_test(r: f64, n: usize, z_dim: usize, alpha: f64) -> Result<CiResult, StatsError> {
    if n < z_dim + 4 {
        return Err(StatsError::TooFewSamples { n, z_dim });
    }
    if !(r.abs() <= 1.0) {
        return Err(StatsError::InvalidCorrelation(r));
    }
    let r = r.clamp(-1.0 + 1e-15, 1.0 - 1e-15);
    let statistic = ((n - z_dim - 3) as f64).sqrt() * r.atanh();
    let p_value = erfc(statistic.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
    Ok(CiResult {
        statistic,
        p_value,
        independent: p_value > alpha,
        cond_set: Vec::new(),
    })
}

/// Conditional independence tester over a fixed dataset; caches the
/// covariance matrix so repeated tests are cheap.
#[derive(Debug, Clone)]
pub struct CiTester {
    names: Vec<String>,
    cov: DMatrix<f64>,
    n: usize,
    pub alpha: f64,
}

impl CiTester {
    pub fn new(ds: &NumericDataset, alpha: f64) -> Self {
        Self {
            names: ds.column_names(),
            cov: covariance(ds.matrix()),
            n: ds.n_rows(),
            alpha,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn test(&self, i: usize, j: usize, cond: &[usize]) -> Result<CiResult, StatsError> {
        let r = partial_correlation_from_cov(&self.cov, i, j, cond)?;
        let mut res = fisher_z_test(r, self.n, cond.len(), self.alpha)?;
        res.cond_set = cond.iter().map(|&k| self.names[k].clone()).collect();
        Ok(res)
    }
}

#[cfg(test)]
mod tests {

    #[test]
    fn correlation_matrix_matches_pairwise_pearson() {
        let m = DMatrix::from_row_slice(6, 3, &[
            1.0, 2.0, 0.5, 2.0, 1.0, 0.1, 3.0, 4.5, -0.2, 4.0, 3.0, 0.9, 5.0, 6.0, 0.3, 6.0, 5.5, -1.0,
        ]);
        let ds = NumericDataset::from_matrix(vec!["a".into(), "b".into(), "c".into()], m).unwrap();
        let r = correlation_matrix(&ds).unwrap();
        for (i, a) in ["a", "b", "c"].iter().enumerate() {
            for (j, b) in ["a", "b", "c"].iter().enumerate() {
                let expect = if i == j { 1.0 } else { partial_correlation(&ds, a, b, &[]).unwrap() };
                assert!((r[(i, j)] - expect).abs() < 1e-12);
            }
        }
    }
    use super::*;
    use crate::data::{generate_synthetic, SemEdge, SemSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ds_from_cols(cols: &[Vec<f64>]) -> NumericDataset {
        let n = cols[0].len();
        let m = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        let names = (0..cols.len()).map(|j| format!("V{j}")).collect();
        NumericDataset::from_matrix(names, m).unwrap()
    }

    fn chain(seed: u64) -> NumericDataset {
        let spec = SemSpec {
            nodes: vec!["X".into(), "Y".into(), "Z".into()],
            edges: vec![
                SemEdge { from: "X".into(), to: "Y".into(), weight: 0.8 },
                SemEdge { from: "Y".into(), to: "Z".into(), weight: 0.7 },
            ],
            noise: Default::default(),
            discretizers: Default::default(),
            seed,
        };
        generate_synthetic(&spec, 5000).unwrap().latent
    }

    #[test]
    fn describe_basic_cases() {
        let ds = ds_from_cols(&[vec![5.0; 4], vec![1.0, 2.0, 2.0, 3.0]]);
        let d = describe(&ds).unwrap();
        assert_eq!((d[0].unique, d[0].sd), (1, 0.0));
        assert_eq!((d[1].mode, d[1].mean), (2.0, 2.0));
        assert_eq!((d[1].min, d[1].max, d[1].count), (1.0, 3.0, 4));
    }

    #[test]
    fn describe_matches_second_pass() {
        let ds = chain(3);
        for (j, s) in describe(&ds).unwrap().iter().enumerate() {
            let col = ds.column(j);
            // Welford as the independent recomputation.
            let (mut mean, mut m2) = (0.0, 0.0);
            for (k, x) in col.iter().enumerate() {
                let d = x - mean;
                mean += d / (k + 1) as f64;
                m2 += d * (x - mean);
            }
            let sd = (m2 / (col.len() - 1) as f64).sqrt();
            assert!((s.mean - mean).abs() < 1e-12);
            assert!((s.sd - sd).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_correlation_is_one() {
        let a: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| 3.0 * x + 1.0).collect();
        let ds = ds_from_cols(&[a, b]);
        let r = partial_correlation(&ds, "V0", "V1", &[]).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chain_partial_correlation_vanishes() {
        let ds = chain(11);
        let r = partial_correlation(&ds, "X", "Z", &["Y"]).unwrap();
        assert!(r.abs() < 0.05, "{r}");
        let r0 = partial_correlation(&ds, "X", "Z", &[]).unwrap();
        assert!(r0.abs() > 0.3);
    }

    #[test]
    fn matches_recursive_formula() {
        let ds = chain(5);
        let rxy = partial_correlation(&ds, "X", "Y", &[]).unwrap();
        let rxz = partial_correlation(&ds, "X", "Z", &[]).unwrap();
        let ryz = partial_correlation(&ds, "Y", "Z", &[]).unwrap();
        let recursive = (rxz - rxy * ryz) / ((1.0 - rxy * rxy) * (1.0 - ryz * ryz)).sqrt();
        let direct = partial_correlation(&ds, "X", "Z", &["Y"]).unwrap();
        assert!((recursive - direct).abs() < 1e-10);
        let sym = partial_correlation(&ds, "Z", "X", &["Y"]).unwrap();
        assert!((sym - direct).abs() < 1e-12);
    }

    #[test]
    fn singular_covariance_is_reported() {
        let a: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..20).map(|i| ((i * 7) % 5) as f64).collect();
        let c = a.clone();
        let ds = ds_from_cols(&[a, b, c]);
        assert_eq!(
            partial_correlation(&ds, "V0", "V1", &["V2"]),
            Err(StatsError::SingularCovariance)
        );
    }

    #[test]
    fn fisher_z_edge_cases() {
        let r = fisher_z_test(0.0, 100, 0, 0.05).unwrap();
        assert_eq!((r.p_value, r.independent), (1.0, true));
        let r = fisher_z_test(0.8, 1000, 0, 0.05).unwrap();
        // sqrt(997) * atanh(0.8) = 34.6..., far in the tail.
        assert!(r.p_value < 1e-6 && !r.independent);
        assert!(matches!(
            fisher_z_test(0.1, 5, 2, 0.05),
            Err(StatsError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn fisher_z_known_value() {
        // z = sqrt(103 - 3) * atanh(0.2) = 2.0273; two-sided p = 0.0426291.
        let r = fisher_z_test(0.2, 103, 0, 0.05).unwrap();
        assert!((r.statistic - 2.027325540540822).abs() < 1e-9);
        assert!((r.p_value - 0.042629131).abs() < 1e-8);
    }

    #[test]
    fn p_monotone_in_abs_r() {
        let mut last = 1.0;
        for k in 0..100 {
            let p = fisher_z_test(k as f64 / 100.0, 200, 1, 0.05).unwrap().p_value;
            assert!(p <= last);
            last = p;
        }
    }

    #[test]
    fn calibrated_on_independent_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let trials = 1000;
        let mut rejections = 0;
        for _ in 0..trials {
            let a: Vec<f64> = (0..200).map(|_| StandardNormal.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..200).map(|_| StandardNormal.sample(&mut rng)).collect();
            let ds = ds_from_cols(&[a, b]);
            let r = partial_correlation(&ds, "V0", "V1", &[]).unwrap();
            if !fisher_z_test(r, 200, 0, 0.05).unwrap().independent {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / trials as f64;
        assert!((rate - 0.05).abs() <= 0.02, "{rate}");
    }

    #[test]
    fn agrees_with_permutation_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 500;
        let a: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = a
            .iter()
            .map(|x| {
                let e: f64 = StandardNormal.sample(&mut rng);
                0.08 * x + e
            })
            .collect();
        let ds = ds_from_cols(&[a.clone(), b.clone()]);
        let r = partial_correlation(&ds, "V0", "V1", &[]).unwrap();
        let p = fisher_z_test(r, n, 0, 0.05).unwrap().p_value;
        // Permutation oracle: shuffle one column, count |r*| >= |r|.
        let mut perm = b.clone();
        let draws = 10_000;
        let mut hits = 0;
        for _ in 0..draws {
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let d = ds_from_cols(&[a.clone(), perm.clone()]);
            let rs = partial_correlation(&d, "V0", "V1", &[]).unwrap();
            if rs.abs() >= r.abs() {
                hits += 1;
            }
        }
        let p_perm = hits as f64 / draws as f64;
        assert!((p - p_perm).abs() < 0.05, "fisher {p} perm {p_perm}");
    }

    #[test]
    fn crosstab_single_level() {
        let ds = crate::data::encode_and_scale(
            &vec![crate::data::fixtures::sample_record(); 3],
            &crate::data::FactorSchema::builtin(),
            &crate::data::ScalingPolicy::standard(&crate::data::FactorSchema::builtin()),
        )
        .unwrap();
        let t = crosstab(&ds, "HS", "SH").unwrap();
        assert_eq!(t.cells.len(), 1);
        assert_eq!(t.cells[0][0].total_pct, 100.0);
        assert!(matches!(crosstab(&ds, "SSC", "SH"), Err(StatsError::ContinuousFactor(_))));
    }

    #[test]
    fn crosstab_percentages_sum() {
        let schema = crate::data::FactorSchema::builtin();
        let recs = crate::data::fixtures::random_records(400, 2);
        let ds = crate::data::encode_and_scale(
            &recs,
            &schema,
            &crate::data::ScalingPolicy::standard(&schema),
        )
        .unwrap();
        let t = crosstab(&ds, "HS", "SH").unwrap();
        let total: f64 = t.cells.iter().flatten().map(|c| c.total_pct).sum();
        assert!((total - 100.0).abs() < 1e-9);
        assert_eq!(t.cells.iter().flatten().map(|c| c.count).sum::<usize>(), 400);
        for row in &t.cells {
            let s: f64 = row.iter().map(|c| c.row_pct).sum();
            assert!((s - 100.0).abs() < 1e-9);
        }
        assert_eq!(t.row_levels, vec!["No", "Irregular", "Regular"]);
        assert!(t.to_text().contains("Irregular"));
    }
}

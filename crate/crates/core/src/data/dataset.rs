use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::record::{RawValue, StudentRecord};
use super::schema::{FactorKind, FactorSchema, TARGET};
use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMethod {
    None,
    Zscore,
    UnitInterval,
}

/// Fitted per-column transform. `apply` maps encoded values to model space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Scaling {
    None,
    Zscore { mean: f64, sd: f64 },
    UnitInterval { min: f64, max: f64 },
}

impl Scaling {
    pub fn method(&self) -> ScalingMethod {
        match self {
            Scaling::None => ScalingMethod::None,
            Scaling::Zscore { .. } => ScalingMethod::Zscore,
            Scaling::UnitInterval { .. } => ScalingMethod::UnitInterval,
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Scaling::None => x,
            Scaling::Zscore { mean, sd } => (x - mean) / sd,
            Scaling::UnitInterval { min, max } => (x - min) / (max - min),
        }
    }

    pub fn invert(&self, z: f64) -> f64 {
        match *self {
            Scaling::None => z,
            Scaling::Zscore { mean, sd } => z * sd + mean,
            Scaling::UnitInterval { min, max } => z * (max - min) + min,
        }
    }

    /// Fits a transform of the given method to raw column values.
    /// `range` pins unit-interval bounds (schema range); otherwise data min/max.
    pub fn fit(method: ScalingMethod, values: &[f64], range: Option<[f64; 2]>) -> Scaling {
        match method {
            ScalingMethod::None => Scaling::None,
            ScalingMethod::Zscore => {
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                let var = if values.len() > 1 {
                    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                let sd = var.sqrt();
                Scaling::Zscore {
                    mean,
                    sd: if sd > 0.0 { sd } else { 1.0 },
                }
            }
            ScalingMethod::UnitInterval => {
                let [min, max] = range.unwrap_or_else(|| {
                    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    [lo, hi]
                });
                if max > min {
                    Scaling::UnitInterval { min, max }
                } else {
                    Scaling::UnitInterval { min, max: min + 1.0 }
                }
            }
        }
    }
}

/// Per-factor scaling choice for [`encode_and_scale`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScalingPolicy {
    pub methods: BTreeMap<String, ScalingMethod>,
    /// Method for factors not listed.
    pub default: Option<ScalingMethod>,
}

impl ScalingPolicy {
    /// Continuous predictors z-scored, CGPA divided onto `[0, 1]`, coded
    /// factors left as integers.
    pub fn standard(schema: &FactorSchema) -> Self {
        let methods = schema
            .factors
            .iter()
            .map(|f| {
                let m = if f.acronym == TARGET {
                    ScalingMethod::UnitInterval
                } else if f.kind.is_continuous() {
                    ScalingMethod::Zscore
                } else {
                    ScalingMethod::None
                };
                (f.acronym.clone(), m)
            })
            .collect();
        Self {
            methods,
            default: None,
        }
    }

    pub fn uniform(method: ScalingMethod) -> Self {
        Self {
            methods: BTreeMap::new(),
            default: Some(method),
        }
    }

    pub fn method_for(&self, acronym: &str) -> ScalingMethod {
        self.methods
            .get(acronym)
            .copied()
            .or(self.default)
            .unwrap_or(ScalingMethod::None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: FactorKind,
    pub scaling: Scaling,
    /// Schema range, kept so unit-interval refits stay pinned to it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
}

/// Encoded, scaled sample matrix. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericDataset {
    columns: Vec<ColumnMeta>,
    matrix: DMatrix<f64>,
    encoding_map: BTreeMap<String, Vec<String>>,
}

impl NumericDataset {
    /// Wraps an already-numeric matrix as unscaled continuous columns.
    pub fn from_matrix(names: Vec<String>, matrix: DMatrix<f64>) -> Result<Self, DataError> {
        if names.len() != matrix.ncols() {
            return Err(DataError::Shape(format!(
                "{} names for {} columns",
                names.len(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Shape("matrix has non-finite entries".into()));
        }
        let columns = names
            .into_iter()
            .map(|name| ColumnMeta {
                name,
                kind: FactorKind::Continuous,
                scaling: Scaling::None,
                range: None,
            })
            .collect();
        Ok(Self {
            columns,
            matrix,
            encoding_map: BTreeMap::new(),
        })
    }

    pub fn from_parts(
        columns: Vec<ColumnMeta>,
        matrix: DMatrix<f64>,
        encoding_map: BTreeMap<String, Vec<String>>,
    ) -> Result<Self, DataError> {
        if columns.len() != matrix.ncols() {
            return Err(DataError::Shape("column metadata does not match matrix".into()));
        }
        Ok(Self {
            columns,
            matrix,
            encoding_map,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn encoding_map(&self) -> &BTreeMap<String, Vec<String>> {
        &self.encoding_map
    }

    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn column_index(&self, name: &str) -> Result<usize, DataError> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.matrix.column(j).iter().copied().collect()
    }

    pub fn column_by_name(&self, name: &str) -> Result<Vec<f64>, DataError> {
        Ok(self.column(self.column_index(name)?))
    }

    /// Encoded (unscaled) values of the matrix.
    pub fn unscaled(&self) -> DMatrix<f64> {
        let mut m = self.matrix.clone();
        for (j, c) in self.columns.iter().enumerate() {
            for v in m.column_mut(j).iter_mut() {
                *v = c.scaling.invert(*v);
            }
        }
        m
    }

    /// Subset of rows (in the given order) keeping scaling as is.
    pub fn select_rows(&self, rows: &[usize]) -> NumericDataset {
        let m = DMatrix::from_fn(rows.len(), self.n_cols(), |i, j| self.matrix[(rows[i], j)]);
        NumericDataset {
            columns: self.columns.clone(),
            matrix: m,
            encoding_map: self.encoding_map.clone(),
        }
    }

    /// Subset of columns by name, in the given order.
    pub fn select_columns(&self, names: &[String]) -> Result<NumericDataset, DataError> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.column_index(n))
            .collect::<Result<_, _>>()?;
        let m = DMatrix::from_fn(self.n_rows(), idx.len(), |i, j| self.matrix[(i, idx[j])]);
        let encoding_map = self
            .encoding_map
            .iter()
            .filter(|(k, _)| names.contains(k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Ok(NumericDataset {
            columns: idx.iter().map(|&j| self.columns[j].clone()).collect(),
            matrix: m,
            encoding_map,
        })
    }

    /// Rows taken from the encoded values with scaling refit on `fit_rows`.
    fn refit_on(&self, raw: &DMatrix<f64>, fit_rows: &[usize], rows: &[usize]) -> (Vec<ColumnMeta>, DMatrix<f64>) {
        let columns: Vec<ColumnMeta> = self
            .columns
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let vals: Vec<f64> = fit_rows.iter().map(|&i| raw[(i, j)]).collect();
                ColumnMeta {
                    scaling: Scaling::fit(c.scaling.method(), &vals, c.range),
                    ..c.clone()
                }
            })
            .collect();
        let m = DMatrix::from_fn(rows.len(), self.n_cols(), |i, j| {
            columns[j].scaling.apply(raw[(rows[i], j)])
        });
        (columns, m)
    }

    /// Decodes one row back to a raw record.
    pub fn decode_row(&self, i: usize) -> Result<StudentRecord, DataError> {
        let mut rec = StudentRecord::new();
        for (j, c) in self.columns.iter().enumerate() {
            let v = c.scaling.invert(self.matrix[(i, j)]);
            let raw = match self.encoding_map.get(&c.name) {
                Some(levels) => {
                    let code = v.round();
                    if code < 0.0 || code as usize >= levels.len() {
                        return Err(DataError::UnknownLevel {
                            acronym: c.name.clone(),
                            value: v.to_string(),
                        });
                    }
                    RawValue::Text(levels[code as usize].clone())
                }
                None => RawValue::Number(v),
            };
            rec.values.insert(c.name.clone(), raw);
        }
        Ok(rec)
    }
}

/// Encodes a record's value for one factor without scaling.
pub fn encode_value(
    schema: &FactorSchema,
    acronym: &str,
    value: &RawValue,
) -> Result<f64, DataError> {
    let spec = schema
        .get(acronym)
        .ok_or_else(|| DataError::UnknownColumn(acronym.to_string()))?;
    let unknown = || DataError::UnknownLevel {
        acronym: acronym.to_string(),
        value: value.to_string(),
    };
    match spec.kind {
        FactorKind::Continuous => value.as_f64().filter(|x| x.is_finite()).ok_or_else(unknown),
        _ => {
            let label = value.to_string();
            spec.level_index(&label).map(|i| i as f64).ok_or_else(unknown)
        }
    }
}

/// Maps records to a numeric matrix. Coded factors take the index of their
/// level in declared order; continuous factors are scaled per `policy`.
pub fn encode_and_scale(
    records: &[StudentRecord],
    schema: &FactorSchema,
    policy: &ScalingPolicy,
) -> Result<NumericDataset, DataError> {
    if records.is_empty() {
        return Err(DataError::Empty);
    }
    let n = records.len();
    let p = schema.factors.len();
    let mut raw = DMatrix::zeros(n, p);
    for (i, r) in records.iter().enumerate() {
        for (j, f) in schema.factors.iter().enumerate() {
            let v = r.get(&f.acronym).ok_or_else(|| DataError::EmptyCell {
                row: i + 1,
                acronym: f.acronym.clone(),
            })?;
            raw[(i, j)] = encode_value(schema, &f.acronym, v)?;
        }
    }
    let mut columns = Vec::with_capacity(p);
    let mut encoding_map = BTreeMap::new();
    for (j, f) in schema.factors.iter().enumerate() {
        let vals: Vec<f64> = raw.column(j).iter().copied().collect();
        let scaling = Scaling::fit(policy.method_for(&f.acronym), &vals, f.range);
        for v in raw.column_mut(j).iter_mut() {
            *v = scaling.apply(*v);
        }
        if !f.kind.is_continuous() {
            encoding_map.insert(f.acronym.clone(), f.levels.clone());
        }
        columns.push(ColumnMeta {
            name: f.acronym.clone(),
            kind: f.kind,
            scaling,
            range: f.range,
        });
    }
    Ok(NumericDataset {
        columns,
        matrix: raw,
        encoding_map,
    })
}

/// Shuffled partition: `round(n * (1 - test_fraction))` training rows, the
/// rest for testing. Each side is returned in ascending row order.
pub fn split_indices(
    n: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::DegenerateSplit);
    }
    let n_train = (n as f64 * (1.0 - test_fraction)).round() as usize;
    if n < 2 || n_train == 0 || n_train >= n {
        return Err(DataError::DegenerateSplit);
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Splits rows and refits every column's scaling on the training side only;
/// the test side reuses the training parameters.
pub fn train_test_split(
    ds: &NumericDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(NumericDataset, NumericDataset), DataError> {
    let (train, test) = split_indices(ds.n_rows(), test_fraction, seed)?;
    Ok(split_with(ds, &train, &test))
}

pub fn split_with(
    ds: &NumericDataset,
    train: &[usize],
    test: &[usize],
) -> (NumericDataset, NumericDataset) {
    let raw = ds.unscaled();
    let (columns, train_m) = ds.refit_on(&raw, train, train);
    let test_m = DMatrix::from_fn(test.len(), ds.n_cols(), |i, j| {
        columns[j].scaling.apply(raw[(test[i], j)])
    });
    (
        NumericDataset {
            columns: columns.clone(),
            matrix: train_m,
            encoding_map: ds.encoding_map.clone(),
        },
        NumericDataset {
            columns,
            matrix: test_m,
            encoding_map: ds.encoding_map.clone(),
        },
    )
}

/// Reads a CSV whose cells are all numbers into unscaled continuous
/// columns.
pub fn read_numeric_csv<R: std::io::Read>(reader: R) -> Result<NumericDataset, DataError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| DataError::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut values = Vec::new();
    let mut n = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DataError::Csv(e.to_string()))?;
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| DataError::ValueOutOfDomain {
                row: i + 1,
                acronym: names.get(j).cloned().unwrap_or_default(),
                value: cell.to_string(),
            })?;
            values.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(DataError::Empty);
    }
    NumericDataset::from_matrix(names.clone(), DMatrix::from_row_slice(n, names.len(), &values))
}

/// Writes the dataset's model-space values with a header row. Floats use
/// the shortest round-trip representation.
pub fn write_numeric_csv<W: std::io::Write>(writer: W, ds: &NumericDataset) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ds.column_names()).map_err(|e| DataError::Csv(e.to_string()))?;
    for row in ds.matrix().row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| DataError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| DataError::Io(e.to_string()))?;
    Ok(())
}

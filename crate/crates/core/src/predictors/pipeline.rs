use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::bands::{bin_cgpa, BandSpec, CgpaBand};
use super::cv::{cross_validate, fit_spec, ModelSpec, Standardizer};
use super::metrics::{
    classification_metrics, regression_metrics, ClassificationReport, MetricsReport, RegressionReport,
};
use super::{predict, FittedModel, ModelError, Task};
use crate::data::{encode_value, split_indices, FactorSchema, Scaling, StudentRecord, TARGET};

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;

/// CGPA maps onto `[0, 1]` by dividing by the scale maximum.
const CGPA_SCALING: Scaling = Scaling::UnitInterval { min: 0.0, max: 4.0 };

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub spec: ModelSpec,
    pub test_fraction: f64,
    pub seed: u64,
    pub cv_folds: usize,
    /// Integer replication count per record (feedback weighting); all 1
    /// when absent. Only training rows are replicated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_weights: Option<Vec<u32>>,
}

impl TrainConfig {
    pub fn new(spec: ModelSpec, seed: u64) -> Self {
        Self {
            spec,
            test_fraction: 0.2,
            seed,
            cv_folds: 5,
            row_weights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub n_rows: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub test_fraction: f64,
    pub cv_folds: usize,
    /// Hash of the encoded training corpus.
    pub data_sha256: String,
    pub metrics: MetricsReport,
    #[serde(default)]
    pub extra_rows: usize,
}

/// Versioned, self-describing trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub format_version: u32,
    pub schema_hash: String,
    pub model_kind: ModelSpec,
    pub feature_names: Vec<String>,
    /// Per-feature transform applied to encoded values before the model.
    pub scaling: Vec<Scaling>,
    pub target_scaling: Scaling,
    pub encoding_map: BTreeMap<String, Vec<String>>,
    pub cgpa_bands: Vec<BandSpec>,
    /// Mean training row in model units; the attribution reference point.
    pub background_mean: Vec<f64>,
    pub parameters: FittedModel,
    pub training_metadata: TrainingMetadata,
}

/// A record encoded for one artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInput {
    /// Codes and raw continuous values, in `feature_names` order.
    pub raw: Vec<f64>,
    /// `raw` after the artifact's scaling: what the model sees.
    pub scaled: Vec<f64>,
}

fn encode_features(
    schema: &FactorSchema,
    features: &[String],
    rec: &StudentRecord,
) -> Result<Vec<f64>, ModelError> {
    let mut skip: Vec<&str> = vec![TARGET];
    for k in rec.values.keys() {
        if schema.get(k).is_none() {
            skip.push(k.as_str());
        }
    }
    let mut bad = rec.validate(schema, &skip).err().unwrap_or_default();
    bad.retain(|a| a != TARGET);
    let mut out = Vec::with_capacity(features.len());
    for f in features {
        match rec.get(f).map(|v| encode_value(schema, f, v)) {
            Some(Ok(v)) if !bad.contains(f) => out.push(v),
            _ => {
                if !bad.contains(f) {
                    bad.push(f.clone());
                }
            }
        }
    }
    if bad.is_empty() {
        Ok(out)
    } else {
        Err(ModelError::ValidationFailed(bad))
    }
}

fn target_of(rec: &StudentRecord, row: usize) -> Result<f64, ModelError> {
    rec.get(TARGET)
        .and_then(|v| v.as_f64())
        .filter(|c| (0.0..=4.0).contains(c))
        .ok_or_else(|| ModelError::ValidationFailed(vec![format!("{TARGET} (row {})", row + 1)]))
}

impl Artifact {
    pub fn task(&self) -> Task {
        self.model_kind.task
    }

    fn check_schema(&self, schema: &FactorSchema) -> Result<(), ModelError> {
        if schema.hash() != self.schema_hash {
            return Err(ModelError::Artifact("schema hash mismatch".into()));
        }
        Ok(())
    }

    /// Validates and encodes a record (CGPA, if present, is ignored).
    pub fn encode(&self, schema: &FactorSchema, rec: &StudentRecord) -> Result<EncodedInput, ModelError> {
        self.check_schema(schema)?;
        let raw = encode_features(schema, &self.feature_names, rec)?;
        let scaled = raw.iter().zip(&self.scaling).map(|(v, s)| s.apply(*v)).collect();
        Ok(EncodedInput { raw, scaled })
    }

    /// Raw model output for a scaled feature vector: unit-interval CGPA for
    /// regression, band index for classification.
    pub fn predict_scaled(&self, x: &[f64]) -> f64 {
        self.parameters.predict_row(x)
    }

    pub fn predict_record(&self, schema: &FactorSchema, rec: &StudentRecord) -> Result<f64, ModelError> {
        Ok(self.predict_scaled(&self.encode(schema, rec)?.scaled))
    }

    /// CGPA on the 0-4 scale from a regression output, clamped to range.
    pub fn cgpa_from_output(&self, out: f64) -> f64 {
        self.target_scaling.invert(out).clamp(0.0, 4.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let a: Artifact = serde_json::from_str(text).map_err(|e| ModelError::Artifact(e.to_string()))?;
        if a.format_version != ARTIFACT_FORMAT_VERSION {
            return Err(ModelError::Artifact(format!("unsupported format version {}", a.format_version)));
        }
        let p = a.feature_names.len();
        if a.scaling.len() != p || a.parameters.n_features() != p || a.background_mean.len() != p {
            return Err(ModelError::Artifact("inconsistent feature dimensions".into()));
        }
        Ok(a)
    }

    /// Writes the artifact and returns the SHA-256 of the written bytes.
    pub fn save(&self, path: &Path) -> Result<String, ModelError> {
        let text = self.to_json();
        std::fs::write(path, &text).map_err(|e| ModelError::Artifact(e.to_string()))?;
        Ok(sha256_hex(text.as_bytes()))
    }

    /// Loads an artifact, verifying its checksum when one is given.
    pub fn load(path: &Path, expected_sha256: Option<&str>) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path).map_err(|e| ModelError::Artifact(format!("{}: {e}", path.display())))?;
        if let Some(expected) = expected_sha256 {
            let got = sha256_hex(&bytes);
            if got != expected {
                return Err(ModelError::Artifact(format!("checksum mismatch: {got} != {expected}")));
            }
        }
        let text = String::from_utf8(bytes).map_err(|e| ModelError::Artifact(e.to_string()))?;
        Self::from_json(&text)
    }
}

fn rows_of(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

/// Encodes records, splits train/test, fits the spec on the (optionally
/// replicated) training rows and records held-out and cross-validated
/// metrics.
pub fn train_pipeline(
    records: &[StudentRecord],
    schema: &FactorSchema,
    config: &TrainConfig,
) -> Result<Artifact, ModelError> {
    if records.is_empty() {
        return Err(ModelError::EmptyData);
    }
    let n = records.len();
    if let Some(w) = &config.row_weights {
        if w.len() != n {
            return Err(ModelError::LengthMismatch(n, w.len()));
        }
    }
    let features = schema.feature_acronyms();
    let p = features.len();
    let mut raw = DMatrix::zeros(n, p);
    let mut cgpa = Vec::with_capacity(n);
    let mut hasher = Sha256::new();
    for (i, rec) in records.iter().enumerate() {
        let row = encode_features(schema, &features, rec)?;
        let c = target_of(rec, i)?;
        for (j, v) in row.iter().enumerate() {
            raw[(i, j)] = *v;
            hasher.update(v.to_le_bytes());
        }
        hasher.update(c.to_le_bytes());
        cgpa.push(c);
    }
    let task = config.spec.task;
    let y: Vec<f64> = match task {
        Task::Regression => cgpa.iter().map(|c| CGPA_SCALING.apply(*c)).collect(),
        Task::Classification => cgpa
            .iter()
            .map(|c| bin_cgpa(*c).map(|b| b.index() as f64))
            .collect::<Result<_, _>>()?,
    };

    let (train, test) = split_indices(n, config.test_fraction, config.seed)?;
    let mut fit_rows = Vec::new();
    for &i in &train {
        let reps = config.row_weights.as_ref().map_or(1, |w| w[i] as usize);
        fit_rows.extend(std::iter::repeat_n(i, reps));
    }
    if fit_rows.is_empty() {
        return Err(ModelError::EmptyData);
    }
    let xtr_raw = rows_of(&raw, &fit_rows);
    let st = if config.spec.standardize {
        Standardizer::fit(&xtr_raw)
    } else {
        Standardizer::identity(p)
    };
    let ytr: Vec<f64> = fit_rows.iter().map(|&i| y[i]).collect();
    let xtr = st.apply(&xtr_raw);
    let model = fit_spec(&config.spec, &xtr, &ytr, config.seed)?;
    let xte = st.apply(&rows_of(&raw, &test));
    let yte: Vec<f64> = test.iter().map(|&i| y[i]).collect();
    let pred_te = predict(&model, &xte)?;
    let ycv: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let cv = cross_validate(&config.spec, &rows_of(&raw, &train), &ycv, config.cv_folds, config.seed)?;
    let cv_folds: Vec<f64> = cv.folds.iter().map(|f| f.score).collect();

    let metrics = match task {
        Task::Regression => MetricsReport {
            regression: Some(RegressionReport {
                test: regression_metrics(&yte, &pred_te)?,
                cv_mean: cv.mean,
                cv_folds,
            }),
            classification: None,
        },
        Task::Classification => {
            let labels = CgpaBand::labels();
            let as_idx = |v: &[f64]| v.iter().map(|x| *x as usize).collect::<Vec<_>>();
            let pred_tr = predict(&model, &xtr)?;
            let train_m = classification_metrics(&as_idx(&ytr), &as_idx(&pred_tr), &labels)?;
            let test_m = classification_metrics(&as_idx(&yte), &as_idx(&pred_te), &labels)?;
            MetricsReport {
                regression: None,
                classification: Some(ClassificationReport {
                    train_accuracy: train_m.accuracy,
                    test_accuracy: test_m.accuracy,
                    f1_macro: test_m.f1_macro,
                    f1_weighted: test_m.f1_weighted,
                    confusion_matrix: test_m.confusion_matrix,
                    labels,
                    cv_mean: cv.mean,
                    cv_folds,
                }),
            }
        }
    };

    let encoding_map = schema
        .factors
        .iter()
        .filter(|f| !f.kind.is_continuous() && f.acronym != TARGET)
        .map(|f| (f.acronym.clone(), f.levels.clone()))
        .collect();
    Ok(Artifact {
        format_version: ARTIFACT_FORMAT_VERSION,
        schema_hash: schema.hash(),
        model_kind: config.spec,
        feature_names: features,
        scaling: st.scalings,
        target_scaling: CGPA_SCALING,
        encoding_map,
        cgpa_bands: CgpaBand::specs(),
        background_mean: xtr.column_iter().map(|c| c.mean()).collect(),
        parameters: model,
        training_metadata: TrainingMetadata {
            n_rows: n,
            n_train: fit_rows.len(),
            n_test: test.len(),
            seed: config.seed,
            test_fraction: config.test_fraction,
            cv_folds: config.cv_folds,
            data_sha256: hasher.finalize().iter().map(|b| format!("{b:02x}")).collect(),
            metrics,
            extra_rows: fit_rows.len() - train.len(),
        },
    })
}

use std::collections::BTreeMap;
use std::io::Read;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bands::{bin_cgpa, CgpaBand};
use super::cv::ModelSpec;
use super::metrics::{classification_metrics, regression_metrics};
use super::pipeline::{train_pipeline, Artifact, TrainConfig};
use super::{ModelError, Task};
use crate::data::{split_indices, FactorSchema, StudentRecord, TARGET};
use crate::report::align;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionRow {
    pub model: String,
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub r2: f64,
    /// Mean CV R²; absent for external predictions.
    pub cv_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRow {
    pub model: String,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: f64,
    pub f1_macro: f64,
    pub f1_weighted: f64,
    /// Mean CV accuracy; absent for external predictions.
    pub cv_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub regression: Vec<RegressionRow>,
    pub classification: Vec<ClassificationRow>,
}

/// Predictions produced by some other tool, keyed by 0-based record row.
/// Regression values are CGPA on the 0-4 scale; classification values are
/// band labels or band indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalPredictions {
    pub model: String,
    pub task: Task,
    pub predictions: BTreeMap<usize, f64>,
}

/// Reads a `row,prediction` CSV.
pub fn read_external_predictions<R: Read>(
    reader: R,
    model: &str,
    task: Task,
) -> Result<ExternalPredictions, ModelError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let bad = |msg: String| ModelError::InvalidConfig(format!("{model}: {msg}"));
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.len() != 2 || &headers[0] != "row" || &headers[1] != "prediction" {
        return Err(bad("header must be row,prediction".into()));
    }
    let mut predictions = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let row: usize = rec[0].trim().parse().map_err(|_| bad(format!("line {}: bad row", line + 2)))?;
        let cell = rec[1].trim();
        let value = match task {
            Task::Regression => cell.parse::<f64>().ok().filter(|c| (0.0..=4.0).contains(c)),
            Task::Classification => CgpaBand::ALL
                .iter()
                .find(|b| b.label() == cell)
                .map(|b| b.index() as f64)
                .or_else(|| cell.parse::<usize>().ok().filter(|&i| i < 4).map(|i| i as f64)),
        }
        .ok_or_else(|| bad(format!("line {}: bad prediction {cell:?}", line + 2)))?;
        if predictions.insert(row, value).is_some() {
            return Err(bad(format!("duplicate row {row}")));
        }
    }
    Ok(ExternalPredictions {
        model: model.to_string(),
        task,
        predictions,
    })
}

/// Ridge, OLS, lasso and elastic net on scaled CGPA; logistic, ridge
/// classifier, KNN, tree and forest on CGPA bands.
pub fn default_suite() -> Vec<ModelSpec> {
    let reg = ["ols", "ridge", "lasso", "elastic_net", "tree", "forest"];
    let cls = ["logistic", "ridge_cls", "knn", "tree", "forest"];
    reg.iter()
        .map(|n| (n, Task::Regression))
        .chain(cls.iter().map(|n| (n, Task::Classification)))
        .map(|(n, t)| ModelSpec::from_name(n, Some(t)).expect("suite names are valid"))
        .collect()
}

impl ComparisonReport {
    pub fn from_artifacts(artifacts: &[Artifact]) -> Self {
        let mut out = ComparisonReport::default();
        for a in artifacts {
            let m = &a.training_metadata.metrics;
            if let Some(r) = &m.regression {
                out.regression.push(RegressionRow {
                    model: a.model_kind.label(),
                    mae: r.test.mae,
                    mse: r.test.mse,
                    rmse: r.test.rmse,
                    r2: r.test.r2,
                    cv_mean: Some(r.cv_mean),
                });
            }
            if let Some(c) = &m.classification {
                out.classification.push(ClassificationRow {
                    model: a.model_kind.label(),
                    train_accuracy: Some(c.train_accuracy),
                    test_accuracy: c.test_accuracy,
                    f1_macro: c.f1_macro,
                    f1_weighted: c.f1_weighted,
                    cv_mean: Some(c.cv_mean),
                });
            }
        }
        out
    }

    pub fn regression_row(&self, model: &str) -> Option<&RegressionRow> {
        self.regression.iter().find(|r| r.model == model)
    }

    pub fn classification_row(&self, model: &str) -> Option<&ClassificationRow> {
        self.classification.iter().find(|r| r.model == model)
    }

    /// Two aligned tables; CV columns are labelled with their metric.
    pub fn to_text(&self) -> String {
        let f = |x: f64| format!("{x:.4}");
        let pct = |x: Option<f64>| x.map_or("-".into(), |v| format!("{:.2}", 100.0 * v));
        let mut out = String::new();
        if !self.regression.is_empty() {
            let mut rows = vec![["model", "mae", "mse", "rmse", "r2", "cv_r2_%"].map(String::from).to_vec()];
            for r in &self.regression {
                rows.push(vec![r.model.clone(), f(r.mae), f(r.mse), f(r.rmse), f(r.r2), pct(r.cv_mean)]);
            }
            out.push_str("Regression (target CGPA/4)\n");
            out.push_str(&align(&rows));
        }
        if !self.classification.is_empty() {
            if !out.is_empty() {
                out.push('\n');
            }
            let mut rows = vec![["model", "train_acc_%", "test_acc_%", "f1_macro", "f1_weighted", "cv_acc_%"]
                .map(String::from)
                .to_vec()];
            for r in &self.classification {
                rows.push(vec![
                    r.model.clone(),
                    pct(r.train_accuracy),
                    pct(Some(r.test_accuracy)),
                    f(r.f1_macro),
                    f(r.f1_weighted),
                    pct(r.cv_mean),
                ]);
            }
            out.push_str("Classification (CGPA bands)\n");
            out.push_str(&align(&rows));
        }
        out
    }
}

fn external_row(
    ext: &ExternalPredictions,
    records: &[StudentRecord],
    test: &[usize],
) -> Result<(Option<RegressionRow>, Option<ClassificationRow>), ModelError> {
    let mut truth = Vec::with_capacity(test.len());
    let mut pred = Vec::with_capacity(test.len());
    for &i in test {
        let p = *ext
            .predictions
            .get(&i)
            .ok_or_else(|| ModelError::InvalidConfig(format!("{}: no prediction for test row {i}", ext.model)))?;
        let c = records[i]
            .get(TARGET)
            .and_then(|v| v.as_f64())
            .ok_or(ModelError::ValidationFailed(vec![TARGET.into()]))?;
        truth.push(c);
        pred.push(p);
    }
    Ok(match ext.task {
        Task::Regression => {
            let t: Vec<f64> = truth.iter().map(|c| c / 4.0).collect();
            let p: Vec<f64> = pred.iter().map(|c| c / 4.0).collect();
            let m = regression_metrics(&t, &p)?;
            let row = RegressionRow {
                model: ext.model.clone(),
                mae: m.mae,
                mse: m.mse,
                rmse: m.rmse,
                r2: m.r2,
                cv_mean: None,
            };
            (Some(row), None)
        }
        Task::Classification => {
            let t = truth.iter().map(|c| bin_cgpa(*c).map(|b| b.index())).collect::<Result<Vec<_>, _>>()?;
            let p: Vec<usize> = pred.iter().map(|x| *x as usize).collect();
            let m = classification_metrics(&t, &p, &CgpaBand::labels())?;
            let row = ClassificationRow {
                model: ext.model.clone(),
                train_accuracy: None,
                test_accuracy: m.accuracy,
                f1_macro: m.f1_macro,
                f1_weighted: m.f1_weighted,
                cv_mean: None,
            };
            (None, Some(row))
        }
    })
}

/// Trains every spec on the same split and tabulates held-out metrics,
/// appending rows for external predictions scored on that split.
pub fn compare_models(
    records: &[StudentRecord],
    schema: &FactorSchema,
    suite: &[ModelSpec],
    base: &TrainConfig,
    externals: &[ExternalPredictions],
) -> Result<(ComparisonReport, Vec<Artifact>), ModelError> {
    let artifacts = suite
        .par_iter()
        .map(|spec| {
            let cfg = TrainConfig { spec: *spec, ..base.clone() };
            train_pipeline(records, schema, &cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut report = ComparisonReport::from_artifacts(&artifacts);
    if !externals.is_empty() {
        let (_, test) = split_indices(records.len(), base.test_fraction, base.seed)?;
        for ext in externals {
            let (r, c) = external_row(ext, records, &test)?;
            report.regression.extend(r);
            report.classification.extend(c);
        }
    }
    Ok((report, artifacts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::random_records;

    fn corpus(n: usize) -> Vec<StudentRecord> {
        random_records(n, 8)
            .into_iter()
            .map(|r| {
                let ssc = r.get("SSC").unwrap().as_f64().unwrap();
                r.with("CGPA", (1.2 + 0.55 * ssc).clamp(0.0, 4.0))
            })
            .collect()
    }

    #[test]
    fn suite_covers_both_tasks() {
        let s = default_suite();
        assert_eq!(s.iter().filter(|m| m.task == Task::Regression).count(), 6);
        assert_eq!(s.iter().filter(|m| m.task == Task::Classification).count(), 5);
    }

    #[test]
    fn external_predictions_are_scored_on_the_test_split() {
        let schema = FactorSchema::builtin();
        let recs = corpus(60);
        let (_, test) = split_indices(60, 0.2, 1).unwrap();
        let mut csv_text = String::from("row,prediction\n");
        for i in 0..60 {
            let c = recs[i].get("CGPA").unwrap().as_f64().unwrap();
            csv_text.push_str(&format!("{i},{c}\n"));
        }
        let ext = read_external_predictions(csv_text.as_bytes(), "perfect", Task::Regression).unwrap();
        let mut cls_text = String::from("row,prediction\n");
        for &i in &test {
            cls_text.push_str(&format!("{i},<2.50\n"));
        }
        let ext_c = read_external_predictions(cls_text.as_bytes(), "const", Task::Classification).unwrap();
        let suite = [ModelSpec::from_name("ridge", None).unwrap()];
        let base = TrainConfig::new(suite[0], 1);
        let (rep, arts) = compare_models(&recs, &schema, &suite, &base, &[ext, ext_c]).unwrap();
        assert_eq!(arts.len(), 1);
        let perfect = rep.regression_row("perfect").unwrap();
        assert_eq!(perfect.mae, 0.0);
        assert_eq!(perfect.r2, 1.0);
        let expected = test
            .iter()
            .filter(|&&i| recs[i].get("CGPA").unwrap().as_f64().unwrap() < 2.5)
            .count() as f64
            / test.len() as f64;
        assert!((rep.classification_row("const").unwrap().test_accuracy - expected).abs() < 1e-12);
        let text = rep.to_text();
        assert!(text.contains("ridge") && text.contains("perfect") && text.contains("cv_r2_%"));
    }

    #[test]
    fn missing_external_row_is_an_error() {
        let schema = FactorSchema::builtin();
        let recs = corpus(30);
        let ext = read_external_predictions("row,prediction\n0,3.0\n".as_bytes(), "x", Task::Regression).unwrap();
        let suite = [ModelSpec::from_name("ols", None).unwrap()];
        let base = TrainConfig::new(suite[0], 0);
        assert!(compare_models(&recs, &schema, &suite, &base, &[ext]).is_err());
    }

    #[test]
    fn malformed_external_file() {
        assert!(read_external_predictions("a,b\n".as_bytes(), "x", Task::Regression).is_err());
        assert!(read_external_predictions("row,prediction\n0,9\n".as_bytes(), "x", Task::Regression).is_err());
        assert!(read_external_predictions("row,prediction\n0,A\n".as_bytes(), "x", Task::Classification).is_err());
        let ok = read_external_predictions("row,prediction\n3,2.50-2.99\n4,3\n".as_bytes(), "x", Task::Classification)
            .unwrap();
        assert_eq!(ok.predictions[&3], 1.0);
        assert_eq!(ok.predictions[&4], 3.0);
    }
}

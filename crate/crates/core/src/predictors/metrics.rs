use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub f1_macro: f64,
    pub f1_weighted: f64,
    pub per_class_f1: Vec<f64>,
    /// `confusion_matrix[true][pred]`.
    pub confusion_matrix: Vec<Vec<usize>>,
    pub labels: Vec<String>,
    /// Set when some label never occurs in `y_true`; such labels add 0 to
    /// the macro average.
    pub absent_classes: Vec<String>,
}

/// Metrics stored with a trained model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regression: Option<RegressionReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    #[serde(flatten)]
    pub test: RegressionMetrics,
    /// Mean cross-validated R² on the training split.
    pub cv_mean: f64,
    pub cv_folds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub f1_macro: f64,
    pub f1_weighted: f64,
    pub confusion_matrix: Vec<Vec<usize>>,
    pub labels: Vec<String>,
    /// Mean cross-validated accuracy on the training split.
    pub cv_mean: f64,
    pub cv_folds: Vec<f64>,
}

pub fn regression_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<RegressionMetrics, ModelError> {
    if y_true.len() != y_pred.len() {
        return Err(ModelError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.len() < 2 {
        return Err(ModelError::EmptyData);
    }
    let n = y_true.len() as f64;
    let mae = y_true.iter().zip(y_pred).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let sse: f64 = y_true.iter().zip(y_pred).map(|(a, b)| (a - b).powi(2)).sum();
    let mean = y_true.iter().sum::<f64>() / n;
    let sst: f64 = y_true.iter().map(|a| (a - mean).powi(2)).sum();
    let mse = sse / n;
    let r2 = if sst > 0.0 {
        1.0 - sse / sst
    } else if sse == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(RegressionMetrics {
        mae,
        mse,
        rmse: mse.sqrt(),
        r2,
    })
}

/// Labels are class indices into `labels`.
pub fn classification_metrics(
    y_true: &[usize],
    y_pred: &[usize],
    labels: &[String],
) -> Result<ClassificationMetrics, ModelError> {
    if y_true.len() != y_pred.len() {
        return Err(ModelError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(ModelError::EmptyData);
    }
    let k = labels.len();
    if let Some(&bad) = y_true.iter().chain(y_pred).find(|&&c| c >= k) {
        return Err(ModelError::InvalidConfig(format!("class index {bad} without label")));
    }
    let mut cm = vec![vec![0usize; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        cm[t][p] += 1;
    }
    let n = y_true.len() as f64;
    let correct: usize = (0..k).map(|c| cm[c][c]).sum();
    let mut per_class = Vec::with_capacity(k);
    let mut weighted = 0.0;
    let mut absent = Vec::new();
    for c in 0..k {
        let support: usize = cm[c].iter().sum();
        let predicted: usize = (0..k).map(|r| cm[r][c]).sum();
        let tp = cm[c][c] as f64;
        let f1 = if support + predicted == 0 {
            0.0
        } else {
            2.0 * tp / (support + predicted) as f64
        };
        if support == 0 {
            absent.push(labels[c].clone());
        }
        weighted += f1 * support as f64 / n;
        per_class.push(f1);
    }
    Ok(ClassificationMetrics {
        accuracy: correct as f64 / n,
        f1_macro: per_class.iter().sum::<f64>() / k as f64,
        f1_weighted: weighted,
        per_class_f1: per_class,
        confusion_matrix: cm,
        labels: labels.to_vec(),
        absent_classes: absent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn perfect_regression() {
        let y = [1.0, 2.0, 3.0];
        let m = regression_metrics(&y, &y).unwrap();
        assert_eq!((m.mae, m.mse, m.r2), (0.0, 0.0, 1.0));
    }

    #[test]
    fn mean_predictor_has_zero_r2() {
        let y = [1.0, 2.0, 4.0, 7.0];
        let m = regression_metrics(&y, &[3.5; 4]).unwrap();
        assert!(m.r2.abs() < 1e-15);
    }

    #[test]
    fn regression_errors() {
        assert!(matches!(regression_metrics(&[1.0, 2.0], &[1.0]), Err(ModelError::LengthMismatch(2, 1))));
        assert!(regression_metrics(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn one_class_prediction_on_balanced_data() {
        let m = classification_metrics(&[0, 0, 1, 1], &[0, 0, 0, 0], &labels(2)).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert!((m.f1_macro - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.per_class_f1[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn hand_worked_confusion_matrix() {
        // true: 0 0 0 1 1 2 ; pred: 0 1 0 1 2 2
        let m = classification_metrics(&[0, 0, 0, 1, 1, 2], &[0, 1, 0, 1, 2, 2], &labels(3)).unwrap();
        assert_eq!(m.confusion_matrix, vec![vec![2, 1, 0], vec![0, 1, 1], vec![0, 0, 1]]);
        // F1: class0 2*2/(3+2)=0.8, class1 2*1/(2+2)=0.5, class2 2*1/(1+2)=2/3
        assert!((m.f1_macro - (0.8 + 0.5 + 2.0 / 3.0) / 3.0).abs() < 1e-12);
        assert!((m.f1_weighted - (0.8 * 3.0 + 0.5 * 2.0 + 2.0 / 3.0) / 6.0).abs() < 1e-12);
        assert!((m.accuracy - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn absent_class_is_flagged() {
        let m = classification_metrics(&[0, 1], &[0, 1], &labels(3)).unwrap();
        assert_eq!(m.absent_classes, vec!["c2".to_string()]);
        assert!((m.f1_macro - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.f1_weighted, 1.0);
    }

    proptest! {
        #[test]
        fn rmse_squared_is_mse(v in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..50)) {
            let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let m = regression_metrics(&a, &b).unwrap();
            prop_assert!((m.rmse * m.rmse - m.mse).abs() <= 1e-12 * m.mse.max(1.0));
        }

        #[test]
        fn confusion_rows_sum_to_support(v in proptest::collection::vec((0usize..4, 0usize..4), 1..60)) {
            let (t, p): (Vec<usize>, Vec<usize>) = v.into_iter().unzip();
            let m = classification_metrics(&t, &p, &labels(4)).unwrap();
            for c in 0..4 {
                prop_assert_eq!(m.confusion_matrix[c].iter().sum::<usize>(), t.iter().filter(|&&x| x == c).count());
            }
            prop_assert!((0.0..=1.0).contains(&m.accuracy));
        }
    }
}

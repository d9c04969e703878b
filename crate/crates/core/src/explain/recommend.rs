use serde::{Deserialize, Serialize};

use super::{Attribution, DomainKind, FeatureDomain};
use crate::data::{FactorSchema, NON_ACTIONABLE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increase,
    Decrease,
    /// Unordered factor: move to `target`.
    SwitchTo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub feature: String,
    pub direction: Direction,
    /// Best value found by the sweep, in raw units.
    pub target: String,
    pub phi: f64,
    /// Model output with only this feature changed to `target`.
    pub expected_prediction: f64,
    pub rationale: String,
}

/// Schema features a student can change.
pub fn actionable_features(schema: &FactorSchema) -> Vec<String> {
    schema
        .feature_acronyms()
        .into_iter()
        .filter(|a| !NON_ACTIONABLE.contains(&a.as_str()))
        .collect()
}

fn candidates(kind: &DomainKind) -> Vec<f64> {
    match kind {
        DomainKind::Levels { values, .. } => values.clone(),
        DomainKind::Continuous { min, max, .. } => (0..=8).map(|k| min + (max - min) * k as f64 / 8.0).collect(),
    }
}

/// Actionable features with negative attribution, most negative first.
/// Each is swept over its admissible values with the others held at `x`;
/// features where no value raises the prediction are dropped.
pub fn recommend(
    attr: &Attribution,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    x: &[f64],
    domains: &[FeatureDomain],
    actionable: &[String],
    k: usize,
) -> Vec<Recommendation> {
    let mut neg: Vec<(usize, f64)> = attr
        .contributions
        .iter()
        .filter(|c| c.phi < 0.0)
        .filter(|c| actionable.contains(&c.feature) && !NON_ACTIONABLE.contains(&c.feature.as_str()))
        .filter_map(|c| domains.iter().position(|d| d.name == c.feature).map(|j| (j, c.phi)))
        .collect();
    neg.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| domains[a.0].name.cmp(&domains[b.0].name)));

    let current = f(x);
    let mut out = Vec::new();
    let mut z = x.to_vec();
    for (j, phi) in neg {
        if out.len() == k {
            break;
        }
        let d = &domains[j];
        let mut best = (x[j], current);
        for v in candidates(&d.kind) {
            z[j] = v;
            let y = f(&z);
            if y > best.1 + 1e-12 {
                best = (v, y);
            }
        }
        z[j] = x[j];
        if best.1 <= current + 1e-12 {
            continue;
        }
        let raw_now = d.scaling.invert(x[j]);
        let raw_best = d.scaling.invert(best.0);
        let direction = match &d.kind {
            DomainKind::Levels { ordered: false, .. } => Direction::SwitchTo,
            _ if raw_best > raw_now => Direction::Increase,
            _ => Direction::Decrease,
        };
        let target = d.describe(best.0);
        let verb = match direction {
            Direction::Increase => "raising",
            Direction::Decrease => "lowering",
            Direction::SwitchTo => "changing",
        };
        let rationale = format!(
            "{} pulls the prediction down by {:.3}; {verb} it to {target} moves the prediction from {:.3} to {:.3}",
            d.name, -phi, current, best.1
        );
        out.push(Recommendation {
            feature: d.name.clone(),
            direction,
            target,
            phi,
            expected_prediction: best.1,
            rationale,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Scaling;
    use crate::explain::shapley_exact_linear;
    use crate::predictors::{LinearModel, Penalty};
    use nalgebra::DMatrix;

    fn level_domain(name: &str, ordered: bool) -> FeatureDomain {
        FeatureDomain {
            name: name.into(),
            kind: DomainKind::Levels {
                values: vec![0.0, 1.0, 2.0, 3.0],
                labels: ["l0", "l1", "l2", "l3"].map(String::from).to_vec(),
                ordered,
            },
            scaling: Scaling::None,
        }
    }

    fn setup(w: Vec<f64>, x: &[f64]) -> (LinearModel, Attribution, Vec<FeatureDomain>) {
        let names = ["SH", "G", "FJ"];
        let m = LinearModel { weights: w, intercept: 0.0, penalty: Penalty::None, excluded: vec![] };
        let bg = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 0.0, 3.0, 3.0, 3.0]);
        let n: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        let a = shapley_exact_linear(&m, x, &bg, &n).unwrap();
        let d = vec![level_domain("SH", true), level_domain("G", true), level_domain("FJ", false)];
        (m, a, d)
    }

    fn all() -> Vec<String> {
        ["SH", "G", "FJ"].map(String::from).to_vec()
    }

    #[test]
    fn nothing_to_improve() {
        let (m, a, d) = setup(vec![1.0, 1.0, 1.0], &[3.0, 2.0, 2.0]);
        assert!(recommend(&a, &|z| m.predict_row(z), &[3.0, 2.0, 2.0], &d, &all(), 5).is_empty());
    }

    #[test]
    fn most_negative_first_and_directions() {
        let x = [0.0, 0.0, 3.0];
        let (m, a, d) = setup(vec![0.5, 2.0, -0.2], &x);
        let r = recommend(&a, &|z| m.predict_row(z), &x, &d, &all(), 5);
        // G has the most negative phi but is never actionable.
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].feature, "SH");
        assert_eq!(r[0].direction, Direction::Increase);
        assert_eq!(r[0].target, "l3");
        assert_eq!(r[1].feature, "FJ");
        assert_eq!(r[1].direction, Direction::SwitchTo);
        assert_eq!(r[1].target, "l0");
        assert!(r[0].expected_prediction > m.predict_row(&x));
        let one = recommend(&a, &|z| m.predict_row(z), &x, &d, &all(), 1);
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn decrease_direction() {
        let x = [3.0, 0.0, 0.0];
        let (m, a, d) = setup(vec![-1.0, 0.0, 0.0], &x);
        let r = recommend(&a, &|z| m.predict_row(z), &x, &d, &all(), 3);
        assert_eq!(r[0].direction, Direction::Decrease);
        assert_eq!(r[0].target, "l0");
    }

    #[test]
    fn actionable_list_excludes_fixed_factors() {
        let a = actionable_features(&FactorSchema::builtin());
        assert_eq!(a.len(), 22 - NON_ACTIONABLE.len());
        assert!(a.contains(&"SH".to_string()) && !a.contains(&"DI".to_string()));
    }
}

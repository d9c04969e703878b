use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::DataError;

const BUILTIN_SCHEMA: &str = include_str!("../../data/schema.json");

/// The 23 survey factors in canonical column order.
pub const SURVEY_ACRONYMS: [&str; 23] = [
    "DI", "YS", "G", "SSC", "HSC", "FE", "ME", "FJ", "MJ", "MI", "AC", "SH", "IF", "GS", "S", "PI",
    "HS", "PSR", "C", "RS", "CS", "SCI", "CGPA",
];

/// Prediction target.
pub const TARGET: &str = "CGPA";

/// Factors a student cannot act on; never recommended.
pub const NON_ACTIONABLE: [&str; 8] = ["G", "FE", "ME", "SSC", "HSC", "DI", "YS", "MI"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    Continuous,
    Ordinal,
    Categorical,
    Binary,
}

impl FactorKind {
    pub fn is_continuous(self) -> bool {
        self == FactorKind::Continuous
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub acronym: String,
    pub name: String,
    pub kind: FactorKind,
    /// Admissible raw values in declared order (non-continuous factors).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
    /// Inclusive `[min, max]` (continuous factors).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    #[serde(default)]
    pub units: String,
}

impl FactorSpec {
    pub fn level_index(&self, value: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSchema {
    pub factors: Vec<FactorSpec>,
}

impl FactorSchema {
    /// The survey schema shipped with the crate.
    pub fn builtin() -> Self {
        let schema = Self::from_json(BUILTIN_SCHEMA).expect("builtin schema is valid");
        schema
            .check_survey_layout()
            .expect("builtin schema has the survey layout");
        schema
    }

    pub fn builtin_json() -> &'static str {
        BUILTIN_SCHEMA
    }

    /// Parses and checks structural invariants (unique acronyms, level
    /// counts, ordered ranges). Does not require the survey layout.
    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let schema: FactorSchema =
            serde_json::from_str(text).map_err(|e| DataError::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let mut seen = BTreeSet::new();
        for f in &self.factors {
            if !seen.insert(f.acronym.as_str()) {
                return Err(DataError::Schema(format!("duplicate acronym {}", f.acronym)));
            }
            match f.kind {
                FactorKind::Continuous => match f.range {
                    Some([lo, hi]) if lo < hi => {}
                    _ => {
                        return Err(DataError::Schema(format!(
                            "{} needs a range with min < max",
                            f.acronym
                        )))
                    }
                },
                _ => {
                    if f.levels.len() < 2 {
                        return Err(DataError::Schema(format!(
                            "{} needs at least two levels",
                            f.acronym
                        )));
                    }
                    let distinct: BTreeSet<_> = f.levels.iter().collect();
                    if distinct.len() != f.levels.len() {
                        return Err(DataError::Schema(format!(
                            "{} has repeated levels",
                            f.acronym
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Exactly the 23 survey acronyms, CGPA continuous on `[0, 4]`.
    pub fn check_survey_layout(&self) -> Result<(), DataError> {
        let have: BTreeSet<&str> = self.factors.iter().map(|f| f.acronym.as_str()).collect();
        let want: BTreeSet<&str> = SURVEY_ACRONYMS.into_iter().collect();
        if self.factors.len() != 23 || have != want {
            return Err(DataError::Schema(
                "schema must declare exactly the 23 survey factors".into(),
            ));
        }
        let cgpa = self.get(TARGET).expect("checked above");
        if cgpa.kind != FactorKind::Continuous || cgpa.range != Some([0.0, 4.0]) {
            return Err(DataError::Schema("CGPA must be continuous on [0, 4]".into()));
        }
        Ok(())
    }

    pub fn get(&self, acronym: &str) -> Option<&FactorSpec> {
        self.factors.iter().find(|f| f.acronym == acronym)
    }

    pub fn index_of(&self, acronym: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.acronym == acronym)
    }

    pub fn acronyms(&self) -> Vec<String> {
        self.factors.iter().map(|f| f.acronym.clone()).collect()
    }

    /// Input factors for prediction (everything except CGPA).
    pub fn feature_acronyms(&self) -> Vec<String> {
        self.factors
            .iter()
            .filter(|f| f.acronym != TARGET)
            .map(|f| f.acronym.clone())
            .collect()
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("schema serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_survey_layout() {
        let s = FactorSchema::builtin();
        assert_eq!(s.factors.len(), 23);
        assert_eq!(s.acronyms(), SURVEY_ACRONYMS.map(String::from).to_vec());
        assert_eq!(s.get("DI").unwrap().levels.len(), 63);
        assert_eq!(s.get("G").unwrap().levels, vec!["Female", "Male"]);
        for f in &s.factors {
            if !f.kind.is_continuous() {
                assert!(f.levels.len() >= 2, "{}", f.acronym);
            }
        }
    }

    #[test]
    fn rejects_duplicate_acronyms() {
        let text = r#"{"factors":[
            {"acronym":"A","name":"a","kind":"binary","levels":["x","y"]},
            {"acronym":"A","name":"b","kind":"binary","levels":["x","y"]}]}"#;
        assert!(FactorSchema::from_json(text).is_err());
    }

    #[test]
    fn rejects_single_level_factor() {
        let text = r#"{"factors":[{"acronym":"A","name":"a","kind":"ordinal","levels":["x"]}]}"#;
        assert!(FactorSchema::from_json(text).is_err());
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(FactorSchema::builtin().hash(), FactorSchema::builtin().hash());
    }
}

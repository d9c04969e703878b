//! Survey schema, record ingestion, numeric encoding and the synthetic
//! SEM generator.

mod dataset;
mod record;
mod schema;
mod sem;

pub use dataset::{
    encode_and_scale, encode_value, read_numeric_csv, split_indices, split_with, train_test_split,
    write_numeric_csv, ColumnMeta, NumericDataset, Scaling, ScalingMethod, ScalingPolicy,
};
pub use record::{
    deduplicate, load_csv, read_csv, validation_report, write_csv, FactorSummary, RawValue,
    StudentRecord,
};
pub use schema::{FactorKind, FactorSchema, FactorSpec, NON_ACTIONABLE, SURVEY_ACRONYMS, TARGET};
pub use sem::{generate_synthetic, Discretizer, Noise, SemEdge, SemSpec, SyntheticData};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("duplicate column {0}")]
    DuplicateColumn(String),
    #[error("row {row}: value {value:?} out of domain for {acronym}")]
    ValueOutOfDomain {
        row: usize,
        acronym: String,
        value: String,
    },
    #[error("row {row}: empty cell for {acronym}")]
    EmptyCell { row: usize, acronym: String },
    #[error("unknown level {value:?} for {acronym}")]
    UnknownLevel { acronym: String, value: String },
    #[error("split leaves one side empty")]
    DegenerateSplit,
    #[error("SEM spec is cyclic")]
    CyclicSpec,
    #[error("invalid SEM spec: {0}")]
    Spec(String),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("no records")]
    Empty,
    #[error("shape: {0}")]
    Shape(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(String),
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn sample_record() -> StudentRecord {
        let schema = FactorSchema::builtin();
        let mut r = StudentRecord::new();
        for f in &schema.factors {
            let v = match f.kind {
                FactorKind::Continuous => RawValue::Number(f.range.unwrap()[0] + 1.0),
                _ => RawValue::Text(f.levels[0].clone()),
            };
            r.values.insert(f.acronym.clone(), v);
        }
        r.with("CGPA", 3.5)
    }

    pub fn random_records(n: usize, seed: u64) -> Vec<StudentRecord> {
        let schema = FactorSchema::builtin();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mut r = StudentRecord::new();
                for f in &schema.factors {
                    let v = match f.kind {
                        FactorKind::Continuous => {
                            let [lo, hi] = f.range.unwrap();
                            RawValue::Number(rng.random_range(lo..=hi))
                        }
                        _ => RawValue::Text(f.levels[rng.random_range(0..f.levels.len())].clone()),
                    };
                    r.values.insert(f.acronym.clone(), v);
                }
                r
            })
            .collect()
    }
}

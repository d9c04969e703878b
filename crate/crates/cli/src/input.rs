use std::path::Path;

use anyhow::{bail, Context, Result};

use cgpa_core::data::{
    encode_and_scale, read_csv, read_numeric_csv, FactorSchema, NumericDataset, ScalingMethod, ScalingPolicy,
    StudentRecord,
};

use crate::run::Run;

pub fn records(run: &mut Run, path: &Path, schema: &FactorSchema) -> Result<Vec<StudentRecord>> {
    let bytes = run.read_input(path)?;
    read_csv(bytes.as_slice(), schema).with_context(|| format!("{}", path.display()))
}

/// A numeric CSV as-is, or a survey CSV with levels replaced by their
/// ordinal codes. `columns` selects a subset when non-empty.
pub fn dataset(run: &mut Run, path: &Path, schema: &FactorSchema, columns: &[String]) -> Result<NumericDataset> {
    let bytes = run.read_input(path)?;
    let ds = match read_numeric_csv(bytes.as_slice()) {
        Ok(ds) => ds,
        Err(numeric_err) => {
            let recs = read_csv(bytes.as_slice(), schema)
                .with_context(|| format!("{}: neither numeric ({numeric_err}) nor a survey CSV", path.display()))?;
            encode_and_scale(&recs, schema, &ScalingPolicy::uniform(ScalingMethod::None))?
        }
    };
    if columns.is_empty() {
        return Ok(ds);
    }
    Ok(ds.select_columns(columns)?)
}

pub fn record_json(run: &mut Run, path: &Path) -> Result<StudentRecord> {
    let text = run.read_input_string(path)?;
    let rec: StudentRecord = serde_json::from_str(&text).with_context(|| format!("{}", path.display()))?;
    if rec.values.is_empty() {
        bail!("{}: empty record", path.display());
    }
    Ok(rec)
}

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schema::{FactorKind, FactorSchema, FactorSpec};
use super::DataError;

/// A raw survey answer: a level label or a number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawValue {
    Number(f64),
    Text(String),
}

impl RawValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            RawValue::Number(x) => Some(*x),
            RawValue::Text(s) => s.trim().parse().ok(),
        }
    }

    fn dedup_key(&self) -> String {
        match self {
            RawValue::Number(x) => format!("n:{:016x}", x.to_bits()),
            RawValue::Text(s) => format!("t:{s}"),
        }
    }
}

impl fmt::Display for RawValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawValue::Number(x) => write!(f, "{x}"),
            RawValue::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for RawValue {
    fn from(x: f64) -> Self {
        RawValue::Number(x)
    }
}

impl From<&str> for RawValue {
    fn from(s: &str) -> Self {
        RawValue::Text(s.to_string())
    }
}

/// One respondent, keyed by factor acronym.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StudentRecord {
    pub values: BTreeMap<String, RawValue>,
}

impl StudentRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, acronym: &str, value: impl Into<RawValue>) -> Self {
        self.values.insert(acronym.to_string(), value.into());
        self
    }

    pub fn get(&self, acronym: &str) -> Option<&RawValue> {
        self.values.get(acronym)
    }

    pub fn insert(&mut self, acronym: &str, value: impl Into<RawValue>) {
        self.values.insert(acronym.to_string(), value.into());
    }

    /// Checks every schema factor, collecting all offending acronyms.
    /// `skip` names factors that may be absent (e.g. CGPA on prediction input).
    pub fn validate(&self, schema: &FactorSchema, skip: &[&str]) -> Result<(), Vec<String>> {
        let mut bad = Vec::new();
        for f in &schema.factors {
            if skip.contains(&f.acronym.as_str()) {
                continue;
            }
            match self.values.get(&f.acronym) {
                Some(v) if value_in_domain(f, v) => {}
                _ => bad.push(f.acronym.clone()),
            }
        }
        for k in self.values.keys() {
            if schema.get(k).is_none() && !skip.contains(&k.as_str()) {
                bad.push(k.clone());
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(bad)
        }
    }
}

pub(crate) fn value_in_domain(spec: &FactorSpec, value: &RawValue) -> bool {
    match spec.kind {
        FactorKind::Continuous => {
            let [lo, hi] = spec.range.expect("continuous factor has a range");
            matches!(value.as_f64(), Some(x) if x.is_finite() && x >= lo && x <= hi)
        }
        _ => match value {
            RawValue::Text(s) => spec.level_index(s).is_some(),
            RawValue::Number(x) => spec.level_index(&x.to_string()).is_some(),
        },
    }
}

fn parse_cell(spec: &FactorSpec, cell: &str, row: usize) -> Result<RawValue, DataError> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Err(DataError::EmptyCell {
            row,
            acronym: spec.acronym.clone(),
        });
    }
    let out_of_domain = || DataError::ValueOutOfDomain {
        row,
        acronym: spec.acronym.clone(),
        value: cell.to_string(),
    };
    let value = match spec.kind {
        FactorKind::Continuous => RawValue::Number(cell.parse().map_err(|_| out_of_domain())?),
        _ => RawValue::Text(cell.to_string()),
    };
    if value_in_domain(spec, &value) {
        Ok(value)
    } else {
        Err(out_of_domain())
    }
}

/// Reads survey records from CSV. The header must hold exactly the schema
/// acronyms (any order). Rows are numbered from 1 (first data row).
pub fn read_csv<R: Read>(reader: R, schema: &FactorSchema) -> Result<Vec<StudentRecord>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| DataError::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut seen = HashSet::new();
    let mut specs = Vec::with_capacity(header.len());
    for h in &header {
        let spec = schema
            .get(h)
            .ok_or_else(|| DataError::UnknownColumn(h.clone()))?;
        if !seen.insert(h.as_str()) {
            return Err(DataError::DuplicateColumn(h.clone()));
        }
        specs.push(spec);
    }
    for f in &schema.factors {
        if !seen.contains(f.acronym.as_str()) {
            return Err(DataError::MissingColumn(f.acronym.clone()));
        }
    }
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| DataError::Csv(format!("row {row_no}: {e}")))?;
        let mut rec = StudentRecord::new();
        for (spec, cell) in specs.iter().zip(row.iter()) {
            rec.values
                .insert(spec.acronym.clone(), parse_cell(spec, cell, row_no)?);
        }
        if row.len() < specs.len() {
            return Err(DataError::EmptyCell {
                row: row_no,
                acronym: specs[row.len()].acronym.clone(),
            });
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn load_csv(path: &Path, schema: &FactorSchema) -> Result<Vec<StudentRecord>, DataError> {
    let file = std::fs::File::open(path)
        .map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
    read_csv(file, schema)
}

/// Writes records with the given column order. Missing values become empty
/// cells.
pub fn write_csv<W: Write>(
    writer: W,
    columns: &[String],
    records: &[StudentRecord],
) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(columns)
        .map_err(|e| DataError::Csv(e.to_string()))?;
    for r in records {
        let row: Vec<String> = columns
            .iter()
            .map(|c| r.get(c).map(|v| v.to_string()).unwrap_or_default())
            .collect();
        w.write_record(&row).map_err(|e| DataError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| DataError::Io(e.to_string()))?;
    Ok(())
}

/// Drops exact duplicates, keeping the first occurrence.
pub fn deduplicate(records: Vec<StudentRecord>) -> Vec<StudentRecord> {
    let mut seen = HashSet::new();
    records
        .into_iter()
        .filter(|r| {
            let key: Vec<(String, String)> = r
                .values
                .iter()
                .map(|(k, v)| (k.clone(), v.dedup_key()))
                .collect();
            seen.insert(key)
        })
        .collect()
}

/// One row of the per-factor data quality table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSummary {
    pub acronym: String,
    pub non_null: usize,
    pub unique: usize,
    pub mode: String,
}

/// Non-null count, distinct count and modal value per schema factor.
/// Mode ties go to the value seen first.
pub fn validation_report(records: &[StudentRecord], schema: &FactorSchema) -> Vec<FactorSummary> {
    schema
        .factors
        .iter()
        .map(|f| {
            let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
            let mut non_null = 0;
            for (i, r) in records.iter().enumerate() {
                if let Some(v) = r.get(&f.acronym) {
                    non_null += 1;
                    counts.entry(v.to_string()).or_insert((0, i)).0 += 1;
                }
            }
            let mode = counts
                .iter()
                .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
                .map(|(k, _)| k.clone())
                .unwrap_or_default();
            FactorSummary {
                acronym: f.acronym.clone(),
                non_null,
                unique: counts.len(),
                mode,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::sample_record;

    fn header(schema: &FactorSchema) -> String {
        schema.acronyms().join(",")
    }

    fn row(schema: &FactorSchema, rec: &StudentRecord) -> String {
        schema
            .acronyms()
            .iter()
            .map(|a| rec.get(a).unwrap().to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    #[test]
    fn reads_well_formed_rows_in_order() {
        let schema = FactorSchema::builtin();
        let a = sample_record();
        let mut b = sample_record();
        b.insert("CGPA", 2.9);
        let mut c = sample_record();
        c.insert("SH", "15+ hours");
        let text = format!(
            "{}\n{}\n{}\n{}\n",
            header(&schema),
            row(&schema, &a),
            row(&schema, &b),
            row(&schema, &c)
        );
        let recs = read_csv(text.as_bytes(), &schema).unwrap();
        assert_eq!(recs, vec![a, b, c]);
    }

    #[test]
    fn header_order_is_free() {
        let schema = FactorSchema::builtin();
        let rec = sample_record();
        let mut cols = schema.acronyms();
        cols.reverse();
        let mut buf = Vec::new();
        write_csv(&mut buf, &cols, &[rec.clone()]).unwrap();
        assert_eq!(read_csv(buf.as_slice(), &schema).unwrap(), vec![rec]);
    }

    #[test]
    fn cgpa_out_of_range_is_rejected() {
        let schema = FactorSchema::builtin();
        let mut rec = sample_record();
        rec.insert("CGPA", 4.2);
        let text = format!("{}\n{}\n", header(&schema), row(&schema, &rec));
        match read_csv(text.as_bytes(), &schema) {
            Err(DataError::ValueOutOfDomain { row, acronym, .. }) => {
                assert_eq!((row, acronym.as_str()), (1, "CGPA"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn blank_cell_is_reported() {
        let schema = FactorSchema::builtin();
        let mut rec = sample_record();
        rec.insert("SH", "");
        let text = format!(
            "{}\n{}\n{}\n",
            header(&schema),
            row(&schema, &sample_record()),
            row(&schema, &rec)
        );
        match read_csv(text.as_bytes(), &schema) {
            Err(DataError::EmptyCell { row, acronym }) => {
                assert_eq!((row, acronym.as_str()), (2, "SH"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_problems() {
        let schema = FactorSchema::builtin();
        let mut cols = schema.acronyms();
        cols.pop();
        let text = format!("{}\n", cols.join(","));
        assert_eq!(
            read_csv(text.as_bytes(), &schema).unwrap_err(),
            DataError::MissingColumn("CGPA".into())
        );
        let text = format!("{},EXTRA\n", header(&schema));
        assert_eq!(
            read_csv(text.as_bytes(), &schema).unwrap_err(),
            DataError::UnknownColumn("EXTRA".into())
        );
    }

    #[test]
    fn dedup_keeps_first() {
        let r1 = sample_record();
        let r2 = sample_record().with("CGPA", 3.1);
        let out = deduplicate(vec![r1.clone(), r1.clone(), r2.clone()]);
        assert_eq!(out, vec![r1.clone(), r2.clone()]);
        assert_eq!(deduplicate(vec![r1.clone(); 1000]), vec![r1.clone()]);
        assert_eq!(deduplicate(vec![r2.clone(), r1.clone()]), vec![r2, r1]);
    }

    #[test]
    fn report_counts_and_mode() {
        let schema = FactorSchema::builtin();
        let recs = vec![
            sample_record().with("SH", "3-9 hours"),
            sample_record().with("SH", "0-3 hours"),
            sample_record().with("SH", "0-3 hours"),
        ];
        let rep = validation_report(&recs, &schema);
        let sh = rep.iter().find(|r| r.acronym == "SH").unwrap();
        assert_eq!((sh.non_null, sh.unique, sh.mode.as_str()), (3, 2, "0-3 hours"));
        let g = rep.iter().find(|r| r.acronym == "G").unwrap();
        assert_eq!((g.unique, g.mode.as_str()), (1, "Female"));
    }

    #[test]
    fn validate_names_every_bad_field() {
        let schema = FactorSchema::builtin();
        let rec = sample_record().with("FJ", "Astronaut").with("AC", "200%");
        let err = rec.validate(&schema, &[]).unwrap_err();
        assert_eq!(err, vec!["FJ".to_string(), "AC".to_string()]);
        assert!(sample_record().validate(&schema, &[]).is_ok());
    }
}

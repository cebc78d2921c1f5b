use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GsaError;
use crate::metrics::FeatureVector;

/// One trained-and-evaluated subset: its features and the model's scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub subset_id: String,
    #[serde(flatten)]
    pub features: FeatureVector,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
}

/// Flat row layout shared by CSV and JSON-lines files.
#[derive(Debug, Serialize, Deserialize)]
struct RecordRow {
    subset_id: String,
    ned: f64,
    norm_std: f64,
    redundancy: f64,
    ele: f64,
    ssr: f64,
    vocab_entropy: f64,
    f1: f64,
    #[serde(default)]
    precision: Option<f64>,
    #[serde(default)]
    recall: Option<f64>,
}

impl From<RecordRow> for ExperimentRecord {
    fn from(r: RecordRow) -> Self {
        ExperimentRecord {
            subset_id: r.subset_id,
            features: FeatureVector {
                ned: r.ned,
                norm_std: r.norm_std,
                redundancy: r.redundancy,
                ele: r.ele,
                ssr: r.ssr,
                vocab_entropy: r.vocab_entropy,
            },
            f1: r.f1,
            precision: r.precision,
            recall: r.recall,
        }
    }
}

impl From<&ExperimentRecord> for RecordRow {
    fn from(r: &ExperimentRecord) -> Self {
        RecordRow {
            subset_id: r.subset_id.clone(),
            ned: r.features.ned,
            norm_std: r.features.norm_std,
            redundancy: r.features.redundancy,
            ele: r.features.ele,
            ssr: r.features.ssr,
            vocab_entropy: r.features.vocab_entropy,
            f1: r.f1,
            precision: r.precision,
            recall: r.recall,
        }
    }
}

fn check(record: ExperimentRecord, row: usize) -> Result<ExperimentRecord, GsaError> {
    if !record.f1.is_finite() || !record.features.to_array().iter().all(|v| v.is_finite()) {
        return Err(GsaError::Records(format!("row {row}: non-finite value")));
    }
    Ok(record)
}

pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<ExperimentRecord>, GsaError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    reader
        .deserialize::<RecordRow>()
        .enumerate()
        .map(|(i, row)| {
            let row = row.map_err(|e| GsaError::Records(format!("row {}: {e}", i + 1)))?;
            check(row.into(), i + 1)
        })
        .collect()
}

pub fn read_records_jsonl<R: BufRead>(input: R) -> Result<Vec<ExperimentRecord>, GsaError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: RecordRow =
            serde_json::from_str(&line).map_err(|e| GsaError::Records(format!("line {}: {e}", i + 1)))?;
        out.push(check(row.into(), i + 1)?);
    }
    Ok(out)
}

/// Reads `.jsonl`/`.json` as JSON lines, anything else as CSV.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<ExperimentRecord>, GsaError> {
    let path = path.as_ref();
    let file = File::open(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("json") => read_records_jsonl(BufReader::new(file)),
        _ => read_records_csv(file),
    }
}

pub fn write_records_csv<W: Write>(records: &[ExperimentRecord], output: W) -> Result<(), GsaError> {
    let mut writer = csv::Writer::from_writer(output);
    for record in records {
        writer
            .serialize(RecordRow::from(record))
            .map_err(|e| GsaError::Records(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

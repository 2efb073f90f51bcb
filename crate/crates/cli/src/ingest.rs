//! CSV ingestion into a return panel.

use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NaPolicy {
    Fail,
    DropRow,
}

#[derive(Debug, Clone, Copy)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub na_policy: NaPolicy,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions { delimiter: b',', na_policy: NaPolicy::Fail }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("parse error at row {row}, column {col}: {reason}")]
    ParseError { row: usize, col: usize, reason: String },
    #[error("row {row} has {found} fields, header has {expected}")]
    RaggedRows { row: usize, found: usize, expected: usize },
    #[error("non-numeric value {value:?} at row {row}, column {col}")]
    NonNumeric { row: usize, col: usize, value: String },
    #[error("missing value at row {row}, column {col}")]
    Missing { row: usize, col: usize },
    #[error("file has no data rows")]
    Empty,
}

/// Parsed panel data in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvPanel {
    pub names: Vec<String>,
    pub data: DMatrix<f64>,
    pub dropped_rows: usize,
}

fn is_na(field: &str) -> bool {
    matches!(field.trim(), "" | "NA" | "NaN" | "nan" | "null" | "NULL" | "N/A")
}

/// Reads a rectangular CSV with a header row. Row numbers in errors are
/// 1-based file lines; columns are 1-based.
pub fn read_bytes(bytes: &[u8], opts: &CsvOptions) -> Result<CsvPanel, IngestError> {
    let mut reader =
        csv::ReaderBuilder::new().delimiter(opts.delimiter).has_headers(true).flexible(true).from_reader(bytes);
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| IngestError::ParseError { row: 1, col: 1, reason: e.to_string() })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let n = names.len();
    let mut values = Vec::new();
    let mut rows = 0;
    let mut dropped = 0;
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| IngestError::ParseError { row: line, col: 1, reason: e.to_string() })?;
        if rec.len() != n {
            return Err(IngestError::RaggedRows { row: line, found: rec.len(), expected: n });
        }
        let mut row = Vec::with_capacity(n);
        let mut missing = None;
        for (j, field) in rec.iter().enumerate() {
            if is_na(field) {
                missing.get_or_insert(j + 1);
                row.push(f64::NAN);
                continue;
            }
            match field.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => return Err(IngestError::NonNumeric { row: line, col: j + 1, value: field.to_string() }),
            }
        }
        if let Some(col) = missing {
            match opts.na_policy {
                NaPolicy::Fail => return Err(IngestError::Missing { row: line, col }),
                NaPolicy::DropRow => {
                    dropped += 1;
                    continue;
                }
            }
        }
        values.extend(row);
        rows += 1;
    }
    if rows == 0 {
        return Err(IngestError::Empty);
    }
    Ok(CsvPanel { names, data: DMatrix::from_row_slice(rows, n, &values), dropped_rows: dropped })
}

pub fn read_path(path: &Path, opts: &CsvOptions) -> Result<(CsvPanel, Vec<u8>), IngestError> {
    let bytes =
        std::fs::read(path).map_err(|e| IngestError::Io { path: path.display().to_string(), reason: e.to_string() })?;
    Ok((read_bytes(&bytes, opts)?, bytes))
}

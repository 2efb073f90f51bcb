use serde::Serialize;
use thiserror::Error;

use crate::ingest::IngestError;

pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum Failure {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Core(#[from] kroncov::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numeric(String),
    #[error("cannot write output: {0}")]
    Output(String),
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Core(e) if !e.is_data_error() => EXIT_NUMERIC,
            Failure::Numeric(_) => EXIT_NUMERIC,
            _ => EXIT_DATA,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Failure::Ingest(e) => match e {
                IngestError::Io { .. } => "io",
                IngestError::ParseError { .. } => "parse_error",
                IngestError::RaggedRows { .. } => "ragged_rows",
                IngestError::NonNumeric { .. } => "non_numeric",
                IngestError::Missing { .. } => "missing_value",
                IngestError::Empty => "empty_input",
            },
            Failure::Core(e) => e.code(),
            Failure::Usage(_) => "usage",
            Failure::Numeric(_) => "numerical_failure",
            Failure::Output(_) => "io",
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody { code: self.code(), message: self.to_string() }
    }
}

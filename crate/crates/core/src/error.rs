use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the toolkit can report.
///
/// Variants are grouped by the CLI exit code they map to: input/validation
/// problems (1), numerical failures (2) and filesystem trouble (3).
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error in {path} at row {row}, column {column}: {message}")]
    Parse {
        path: String,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unknown region: {0}")]
    Lookup(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("conditioning error: column {column} ({name}) is collinear with the rest of the design (condition number {condition:.3e})")]
    Conditioning {
        column: usize,
        name: String,
        condition: f64,
    },

    #[error("completion error: {0}")]
    Completion(String),

    #[error("no dominant period: {0}")]
    NoPeriod(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("fixed-point iteration is not a contraction after {iterations} iterations (last iterate norm {last_norm:.6e})")]
    NonContraction { iterations: usize, last_norm: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps `self` with the name of the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code used by the CLI: 1 validation, 2 numeric, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_)
            | Error::Parse { .. }
            | Error::Domain(_)
            | Error::Config(_)
            | Error::Validation(_)
            | Error::Lookup(_)
            | Error::Shape(_) => 1,
            Error::Degenerate(_)
            | Error::Conditioning { .. }
            | Error::Completion(_)
            | Error::NoPeriod(_)
            | Error::Numeric(_)
            | Error::Training(_)
            | Error::NonContraction { .. } => 2,
            Error::Io { .. } => 3,
            Error::Stage { source, .. } => source.exit_code(),
            Error::Csv { source, .. } => {
                if source.is_io_error() {
                    3
                } else {
                    1
                }
            }
        }
    }
}

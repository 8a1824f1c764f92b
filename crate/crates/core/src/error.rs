use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("missing column {0:?}")]
    MissingColumn(String),

    #[error("column {0:?} is mapped to more than one role")]
    DuplicateRole(String),

    #[error("non-binary class value {value:?} in column {column:?} at row {row}")]
    NonBinaryClass {
        column: String,
        row: usize,
        value: String,
    },

    #[error("non-numeric timestamp {value:?} at row {row}")]
    InvalidTimestamp { row: usize, value: String },

    #[error("non-numeric value {value:?} in column {column:?} at row {row}")]
    NonNumeric {
        column: String,
        row: usize,
        value: String,
    },

    #[error("entity {entity:?} has rows with both class labels")]
    MixedClass { entity: String },

    #[error("empty sample: {0}")]
    EmptySample(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("baseline fingerprint {expected} does not match real table fingerprint {actual}")]
    FingerprintMismatch { expected: String, actual: String },

    #[error("synthetic table has no entity column; run `txfid assign` first or pass --assign")]
    MissingEntityColumn,

    #[error("incompatible: {0}")]
    Incompatible(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 usage/config, 3 data insufficiency,
    /// 4 fingerprint mismatch, 5 schema/pattern incompatibility.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Csv { .. }
            | Error::Config(_)
            | Error::MissingColumn(_)
            | Error::DuplicateRole(_)
            | Error::NonBinaryClass { .. }
            | Error::InvalidTimestamp { .. }
            | Error::NonNumeric { .. }
            | Error::MixedClass { .. }
            | Error::InvalidArgument(_)
            | Error::Json(_) => 2,
            Error::EmptySample(_) | Error::InsufficientData(_) => 3,
            Error::FingerprintMismatch { .. } => 4,
            Error::MissingEntityColumn | Error::Incompatible(_) => 5,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

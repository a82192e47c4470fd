use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch at record {record}: {detail}")]
    DimensionMismatch { record: usize, detail: String },

    #[error("non-finite value at record {record}, {}", fmt_location(*.stripe, *.coord))]
    NonFinite {
        record: usize,
        /// `None` when the value sits in the global feature.
        stripe: Option<usize>,
        coord: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("sets do not conform: {0}")]
    Conformance(String),

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("anchor {anchor} has no positive in the batch")]
    NoPositive { anchor: usize },

    #[error("anchor {anchor} has no negative in the batch")]
    NoNegative { anchor: usize },

    #[error("need {needed} distinct identities, found {found}")]
    NotEnoughIdentities { needed: usize, found: usize },

    #[error("no query has a valid cross-camera match")]
    NoValidQueries,

    #[error("empty embedding set")]
    EmptySet,

    #[error("{}: expected {expected} bytes, found {actual}", .path.display())]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("unsupported dtype {0:?} (only \"f32le\")")]
    UnsupportedDtype(String),

    #[error("malformed manifest {}: {source}", .path.display())]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the filesystem itself, as opposed to bad content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

fn fmt_location(stripe: Option<usize>, coord: usize) -> String {
    match stripe {
        Some(s) => format!("stripe {s}, coord {coord}"),
        None => format!("global coord {coord}"),
    }
}

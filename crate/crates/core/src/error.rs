use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the correlation toolkit.
///
/// Variants fall into two families: input problems (parsing, IO, shape
/// mismatches) and numerical problems (degenerate landmarks). The CLI maps
/// them to distinct exit codes through [`Error::is_numerical`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("io error: {0}")]
    Sink(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("no annotations found in {0}")]
    NoAnnotations(PathBuf),

    #[error("need at least {required} records, found {found}")]
    TooFewRecords { required: usize, found: usize },

    #[error("mixed point counts: expected {expected} points, offending records: {}", offenders.join(", "))]
    MixedPointCounts { expected: usize, offenders: Vec<String> },

    #[error("record {image_id}: {message}")]
    InvalidRecord { image_id: String, message: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("image ids do not align: {0}")]
    IdMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix contains a non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("degenerate shape in record {image_id}: all points coincide")]
    DegenerateShape { image_id: String },

    #[error("degenerate landmark {landmark}: covariance is not invertible")]
    DegenerateLandmark { landmark: usize },

    #[error("degenerate column ({0}): covariance is not invertible")]
    DegenerateColumn(ColumnSide),

    #[error("zero inter-ocular distance in record {image_id}")]
    ZeroInterocular { image_id: String },

    #[error("combinatorial budget exceeded: C({m_size}, {budget}) > {limit}")]
    CombinatorialBudget { m_size: usize, budget: usize, limit: u64 },
}

/// Which argument of a pairwise CCA call was degenerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnSide {
    U,
    V,
    Both,
}

impl std::fmt::Display for ColumnSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ColumnSide::U => write!(f, "first"),
            ColumnSide::V => write!(f, "second"),
            ColumnSide::Both => write!(f, "both"),
        }
    }
}

impl Error {
    /// True for failures caused by the data's numerics rather than its syntax.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::DegenerateShape { .. }
                | Error::DegenerateLandmark { .. }
                | Error::DegenerateColumn(_)
                | Error::ZeroInterocular { .. }
        )
    }

    /// A parse error at `line` (1-based) of `source_name`.
    pub fn parse(source_name: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

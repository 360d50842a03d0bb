use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {actual}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("batch normalization in train mode needs at least 2 values per channel, got {0}")]
    DegenerateBatch(usize),

    #[error("target {value} at index {index} is not 0 or 1")]
    NonBinaryTarget { index: usize, value: f64 },

    #[error("backward requires a cache from a train-mode forward")]
    EvalModeCache,

    #[error("{}: cannot read: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: malformed csv: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{}: missing column `{column}`", path.display())]
    MissingColumn { path: PathBuf, column: String },

    #[error("{}: row {row}, column `{column}`: cannot parse `{value}` as a number", path.display())]
    ParseNumber {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },

    #[error("{}: row {row}, column `{column}`: label `{value}` is not 0 or 1", path.display())]
    NonBinaryLabel {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },

    #[error("{}: row {row}, column `{column}`: flag `{value}` is not a boolean", path.display())]
    InvalidFlag {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },

    #[error("{}: no data rows", path.display())]
    EmptyFile { path: PathBuf },

    #[error("series `{0}` appears more than once")]
    DuplicateSeries(String),

    #[error("series `{0}` has no subject in the metadata")]
    UnknownSubject(String),

    #[error("need at least {k} distinct subjects for {k} folds, found {subjects}")]
    TooFewSubjects { subjects: usize, k: usize },

    #[error("checkpoint: bad magic bytes")]
    BadMagic,

    #[error("checkpoint: unsupported version {0}")]
    UnsupportedVersion(u32),

    #[error("checkpoint: truncated file")]
    Truncated,

    #[error("checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("architecture mismatch: {0}")]
    SpecMismatch(String),

    #[error("fold {fold}: {partition} partition is empty")]
    EmptyPartition {
        fold: usize,
        partition: &'static str,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            op,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// True for failures of the numerics (divergence, NaN) rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }
}

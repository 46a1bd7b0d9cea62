use std::path::PathBuf;
use std::time::Duration;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("target column `{0}` not found in header")]
    MissingTarget(String),

    #[error("column `{0}` not found in header")]
    UnknownColumn(String),

    #[error("cannot parse `{value}` at row {row}, column `{column}` as a number")]
    UnparseableCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("dataset is empty{0}")]
    EmptyDataset(&'static str),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("feature index {index} out of range for {n_features} features")]
    FeatureIndex { index: usize, n_features: usize },

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("lambda must lie in (0, 1], got {0}")]
    InvalidLambda(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset has no target column")]
    NoTarget,

    #[error("target must be binary (0/1) for {0}")]
    NonBinaryTarget(&'static str),

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("predictor returned non-finite value {value} at row {row}")]
    NonFinitePrediction { row: usize, value: f64 },

    #[error("score `{score}` is incompatible with this model/target: {reason}")]
    IncompatibleScore { score: &'static str, reason: String },

    #[error("impurity importance requires a built-in forest or tree model")]
    NotAForest,

    #[error("cannot normalize an all-zero metric vector")]
    AllZero,

    #[error("zero variance in `{0}`; correlation undefined")]
    ZeroVariance(String),

    #[error("metric vectors cover different features")]
    FeatureSetMismatch,

    #[error("failed to start external predictor `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },

    #[error("external predictor failed during batch {batch}: {status}")]
    ChildFailed { batch: usize, status: String },

    #[error("external predictor sent malformed line {line:?} in batch {batch}")]
    MalformedResponse { batch: usize, line: String },

    #[error("external predictor returned {got} predictions for {expected} rows in batch {batch}")]
    CountMismatch {
        batch: usize,
        expected: usize,
        got: usize,
    },

    #[error("external predictor timed out after {timeout:?} in batch {batch}")]
    Timeout { batch: usize, timeout: Duration },

    #[error("while analyzing feature {feature}: {source}")]
    Feature {
        feature: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_feature(self, feature: usize) -> Self {
        match self {
            e @ Error::Feature { .. } => e,
            other => Error::Feature {
                feature,
                source: Box::new(other),
            },
        }
    }

    /// Strips any feature context and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Feature { source, .. } => source.root(),
            other => other,
        }
    }
}

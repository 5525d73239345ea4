use thiserror::Error;

/// Every error the crate reports.
///
/// User and item indices carried by the variants are the dense 0-based
/// indices used inside the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("duplicate rating for user {user}, item {item}")]
    DuplicateEntry { user: usize, item: usize },

    #[error("{what} index {index} out of range (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("rating {value} outside scale [{lo}, {hi}]")]
    RatingOutOfScale { value: f64, lo: f64, hi: f64 },

    #[error("invalid rating scale [{lo}, {hi}]")]
    InvalidScale { lo: f64, hi: f64 },

    #[error("matrix has no cells")]
    EmptyMatrix,

    #[error("holdout fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),

    #[error("split kind mismatch: expected {expected}")]
    SplitKindMismatch { expected: &'static str },

    #[error("user has {available} ratings, cannot take {requested} and keep a nonempty holdout")]
    InsufficientRatings { available: usize, requested: usize },

    #[error("invalid anonymity parameter k={k} for {n} users")]
    InvalidK { k: usize, n: usize },

    #[error("cannot build a prototype from an empty cluster")]
    EmptyCluster,

    #[error("unknown user {0}")]
    UnknownUser(usize),

    #[error("model {model} cannot use prediction input {input}")]
    InputMismatch {
        model: &'static str,
        input: &'static str,
    },

    #[error("model {0} requires an anonymized matrix")]
    MissingAnonymizedMatrix(&'static str),

    #[error("model {0} requires a training matrix")]
    MissingTrainingMatrix(&'static str),

    #[error("model {model} requires {expected} similarities")]
    SimilaritySourceMismatch {
        model: &'static str,
        expected: &'static str,
    },

    #[error("model {0} requires an assignment map")]
    MissingAssignmentMap(&'static str),

    #[error("empty test set")]
    EmptyTestSet,

    #[error("no item has a defined mean on both sides")]
    NoComparableItems,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("unsupported format version {0:?}")]
    FormatVersionMismatch(String),

    #[error("checksum mismatch: stored {stored}, computed {computed}")]
    ChecksumMismatch { stored: String, computed: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

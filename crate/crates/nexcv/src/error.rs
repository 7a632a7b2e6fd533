//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by dataset handling, split provisioning, classifiers and
/// evaluation runs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// A record in an input file could not be parsed. `line` is 1-based and
    /// counts the header row for CSV inputs.
    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedRecord {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("dataset {0:?} contains no examples")]
    EmptyDataset(String),

    /// The sentinel labels used for out-of-scope golds and abstentions may
    /// not appear as real class labels.
    #[error("label {0:?} is reserved and cannot be used as a class label")]
    ReservedLabel(String),

    #[error("invalid example: {0}")]
    InvalidExample(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Provisioning was asked to run with every class selected as a
    /// negative-example candidate.
    #[error("no retained classes: every label was selected as a negative-example candidate")]
    NoRetainedClasses,

    /// A retained class cannot be represented on both sides of a split.
    #[error("class {label:?} has {count} example(s); retained classes need at least 2")]
    UnsplittableClass { label: String, count: usize },

    #[error("classifier used before fit")]
    NotFitted,

    #[error("training data invalid: {0}")]
    InvalidTrainingData(String),

    /// Wraps the failure of a single evaluation retry with its index.
    #[error("retry {retry} failed: {source}")]
    RetryFailed {
        retry: usize,
        #[source]
        source: Box<Error>,
    },

    // The three external-engine failure modes are kept distinct so callers
    // can tell a dead process from a misbehaving one from a slow one.
    #[error("engine process exited unexpectedly ({status})")]
    EngineExited { status: String },

    #[error("engine protocol error at response line {line}: {reason}")]
    EngineProtocol { line: usize, reason: String },

    #[error("engine call timed out after {timeout_ms} ms")]
    EngineTimeout { timeout_ms: u64 },

    /// The engine answered with `{"ok":false,...}`.
    #[error("engine reported error: {0}")]
    EngineError(String),
}

pub type Result<T> = std::result::Result<T, Error>;

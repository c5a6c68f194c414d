use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// One semantic problem found while validating a config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    /// Dotted path of the offending field, e.g. `episode.delta`.
    pub path: String,
    pub reason: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.reason)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("sequence length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("{which} is not a probability vector (sums to {sum})")]
    NotNormalized { which: &'static str, sum: f64 },

    #[error("invalid intention process: {}", violations.join("; "))]
    InvalidProcess { violations: Vec<String> },

    #[error("need 1 <= i < j, got i={i}, j={j}")]
    IndexOrder { i: usize, j: usize },

    #[error("enumeration of {states}^{horizon} sequences exceeds the {limit} guard")]
    EnumerationTooLarge {
        states: usize,
        horizon: usize,
        limit: u64,
    },

    #[error("stochastic drift in matrix power: row {row} sums to {sum}")]
    StochasticDrift { row: usize, sum: f64 },

    #[error("{what}: index {index} out of range for size {len}")]
    IndexOutOfBounds {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("alphabet mismatch: {context}")]
    AlphabetMismatch { context: String },

    #[error("delta must lie in (0, {max}], got {delta}")]
    InvalidDelta { delta: f64, max: f64 },

    #[error("invalid {what}: {reason}")]
    InvalidArgument { what: &'static str, reason: String },

    #[error("cannot read config {path}: {source}")]
    ConfigRead {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot parse config: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error("invalid config:\n{}", errors.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    ConfigInvalid { errors: Vec<FieldError> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code the CLI maps this error to: 1 for validation
    /// problems (bad inputs, bad config), 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::ConfigRead { .. } | Error::StochasticDrift { .. } => 2,
            _ => 1,
        }
    }
}

use thiserror::Error;

/// Errors raised across the toolkit.
///
/// The variants map onto the command-line exit-code contract: configuration
/// problems are usage errors, data/parse/training problems are data errors,
/// and degenerate numerics are reported separately.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("unsupported model version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("calibration degenerate: {0}")]
    Degenerate(String),

    #[error("no nontrivial root: {0}")]
    NoRoot(String),

    #[error("horizon too short: all {runs} runs were censored at {max_steps} steps")]
    HorizonTooShort { runs: usize, max_steps: u64 },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures that stem from numerical degeneracy rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Degenerate(_) | Error::NoRoot(_) | Error::HorizonTooShort { .. } | Error::Internal(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

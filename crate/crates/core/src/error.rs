use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input data violates a declared invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Configuration is inconsistent (dimensions, counts, thresholds).
    #[error("configuration error: {0}")]
    Config(String),

    /// Training diverged or produced a non-finite value.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The multiplier crossed its ceiling: the eligibility target is not
    /// attainable.
    #[error("infeasible epsilon {epsilon}: lambda reached {lambda} at step {step}")]
    Infeasible { epsilon: f64, lambda: f64, step: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record in {path} line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

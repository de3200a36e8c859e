use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A malformed line in one of the text formats.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Input that parses but violates a data contract (empty set, unknown id, ...).
    #[error("{0}")]
    Data(String),

    /// Factorization failure, ADMM non-convergence and similar.
    #[error("{0}")]
    Numerical(String),

    #[error("ADMM did not converge in {iterations} iterations (primal residual {residual:e})")]
    AdmmNotConverged { iterations: usize, residual: f64 },

    #[error(
        "projected gradient descent did not converge in {iterations} iterations (step {step:e})"
    )]
    PgdNotConverged { iterations: usize, step: f64 },

    /// Invalid flag combination or argument value.
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(path: &str, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Parse { .. } | Error::Data(_) | Error::Io { .. } => 2,
            Error::Numerical(_)
            | Error::AdmmNotConverged { .. }
            | Error::PgdNotConverged { .. } => 3,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input document; `context` carries the location reported by the parser.
    #[error("parse error in {origin}: {context}")]
    Parse { origin: String, context: String },

    #[error("invalid model: {0}")]
    Validation(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite state at t = {time}: {detail}")]
    NonFinite { time: f64, detail: String },

    #[error("did not settle within t_max = {t_max} s (last derivative norm {residual:.3e})")]
    SettleTimeout { t_max: f64, residual: f64 },

    #[error("optimization problem is infeasible: {0}")]
    Infeasible(String),

    #[error("oracle did not reach tolerance: {0}")]
    NotConverged(String),
}

impl Error {
    /// Errors caused by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::SettleTimeout { .. } | Error::NotConverged(_)
        )
    }

    /// Stable short tag used by machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Dimension { .. } => "dimension",
            Error::NonFinite { .. } => "non_finite",
            Error::SettleTimeout { .. } => "settle_timeout",
            Error::Infeasible(_) => "infeasible",
            Error::NotConverged(_) => "not_converged",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            got,
        }
    }
}

pub(crate) fn check_len(what: &'static str, v: &[f64], expected: usize) -> Result<()> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(Error::dim(what, expected, v.len()))
    }
}

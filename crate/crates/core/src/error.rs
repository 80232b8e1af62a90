use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "explicit scheme unstable: dt = {dt:.3e} exceeds bound {max_dt:.3e} \
         (sigma = {sigma}, r = {rate}); need at least {required_steps} time steps"
    )]
    Unstable {
        dt: f64,
        max_dt: f64,
        sigma: f64,
        rate: f64,
        required_steps: usize,
    },

    #[error(
        "iterative solver did not converge after {iterations} iterations (residual {residual:.3e})"
    )]
    NotConverged { iterations: usize, residual: f64 },

    #[error("query {what} = {value} outside grid range [{lo}, {hi}]")]
    OutOfBounds {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("non-finite value produced: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of the numerics (instability, non-convergence) as
    /// opposed to bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Unstable { .. } | Error::NotConverged { .. } | Error::NonFinite(_)
        )
    }
}

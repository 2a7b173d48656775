use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The last backoff stage fails with probability (numerically) one, so the
    /// expected number of backoff slots is unbounded.
    #[error("expected backoff diverges: last-stage failure probability {p_fail}")]
    Divergence { p_fail: f64 },

    #[error(
        "fixed point not reached after {iterations} iterations \
         (residual {residual:e}, last attempt rate {tau})"
    )]
    NonConvergence {
        iterations: usize,
        residual: f64,
        tau: f64,
    },

    #[error("kernel cache: {0}")]
    Cache(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

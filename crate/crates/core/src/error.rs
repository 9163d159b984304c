use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("graph is not strongly connected")]
    NotStronglyConnected,

    #[error("{what}: no valid sample after {attempts} attempts")]
    RetryBudgetExhausted { what: &'static str, attempts: usize },

    #[error("matrix is not doubly stochastic: {0}")]
    NotDoublyStochastic(String),

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("rank condition unattainable: need n >= m (n = {n}, m = {m})")]
    RankUnattainable { n: usize, m: usize },

    #[error("linear system is inconsistent (residual {residual:e})")]
    InconsistentSystem { residual: f64 },

    #[error("zero-norm covariate at round {round}, node {node}")]
    ZeroNormCovariate { round: usize, node: usize },

    #[error("predictor history was not recorded for this run")]
    MissingPredictors,

    #[error("variant {variant} requires {what}")]
    MissingComponent { variant: &'static str, what: &'static str },

    #[error("config: {0}")]
    Config(String),

    #[error("horizon T = {horizon}, trial {trial}: {source}")]
    Cell {
        horizon: usize,
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

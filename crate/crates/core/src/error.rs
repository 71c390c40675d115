use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of a latency, rate or choice function.
    #[error("{what}: value {value} outside domain ({detail})")]
    Domain {
        what: &'static str,
        value: f64,
        detail: String,
    },

    /// The graph or a routing support violates a structural requirement.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("line search failed at iteration {iteration}: {detail}")]
    LineSearch { iteration: usize, detail: String },

    #[error("path oracle unavailable: more than {cap} paths")]
    OracleUnavailable { cap: usize },

    #[error("parse error: {0}")]
    Parse(serde_json::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e)
    }
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, detail: impl Into<String>) -> Self {
        Error::Domain {
            what,
            value,
            detail: detail.into(),
        }
    }
}

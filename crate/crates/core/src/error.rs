use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// `f(lo)` and `f(hi)` do not bracket a sign change.
    #[error("invalid bracket [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    InvalidBracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("{routine} did not converge: {detail}")]
    NonConvergence {
        routine: &'static str,
        detail: String,
    },

    #[error("summary requested over an empty record set")]
    EmptyRecords,

    #[error("replicate {index} failed: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of an iterative numerical routine.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonConvergence { .. } | Error::InvalidBracket { .. } => true,
            Error::Replicate { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

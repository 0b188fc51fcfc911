use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("graph generation failed after {attempts} attempts: {reason}")]
    Generation { attempts: usize, reason: String },

    /// `line` 0 stands for the file as a whole.
    #[error("{}", located(*line, message))]
    Parse { line: usize, message: String },

    #[error("unknown algorithm `{0}` (field `algorithm`)")]
    UnknownAlgorithm(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("belief contradiction for agent {agent}: every likelihood is zero")]
    BeliefContradiction { agent: usize },

    #[error("{what} bound exceeded: {got} > {limit}")]
    BoundExceeded {
        what: &'static str,
        limit: usize,
        got: usize,
    },

    #[error("injection refused: {0}")]
    Injection(String),

    #[error("{0}")]
    Undefined(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

fn located(line: usize, message: &str) -> String {
    if line == 0 {
        message.to_string()
    } else {
        format!("line {line}: {message}")
    }
}

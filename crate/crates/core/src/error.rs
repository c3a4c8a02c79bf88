use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Every variant maps onto one of the CLI exit codes through
/// [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid {entity} '{id}': {reason}")]
    Semantic {
        entity: &'static str,
        id: String,
        reason: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("problem is intractable: {0}")]
    Intractable(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn semantic(entity: &'static str, id: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Semantic {
            entity,
            id: id.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Syntax { .. } | Error::Semantic { .. } | Error::Config(_) | Error::Dimension(_) | Error::Io(_) => 2,
            Error::Numerical(_) | Error::Intractable(_) => 3,
            Error::Infeasible(_) => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

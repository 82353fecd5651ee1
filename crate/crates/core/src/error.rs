use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("config line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical fault: {0}")]
    Numerical(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("outer iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Params(#[from] ParamsError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            e @ Error::AtIteration { .. } => e,
            e => Error::AtIteration {
                iteration,
                source: Box::new(e),
            },
        }
    }
}

/// Failures reading or validating a trained-parameter file.
#[derive(Debug, Error, PartialEq)]
pub enum ParamsError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("missing field `{0}`")]
    MissingField(String),

    #[error("field `{field}`: {message}")]
    BadField { field: String, message: String },

    #[error("unsupported params version {0}")]
    Version(i64),

    #[error("params were trained for unroll_T={file} but {expected} was requested")]
    UnrollMismatch { file: usize, expected: usize },

    #[error("params were trained for K={file} users but the config has K={expected}")]
    UserMismatch { file: usize, expected: usize },
}

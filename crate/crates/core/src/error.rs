use thiserror::Error;

/// Errors produced by graph construction, kernel design and the estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Input data violates a structural invariant (symmetry, sign, range).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A matrix that must be positive definite is not.
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("numerical failure in {stage}: {detail}")]
    Numerical { stage: String, detail: String },

    #[error("configuration error in field `{field}`: {detail}")]
    Config { field: String, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn numerical(stage: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numerical {
            stage: stage.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            detail: detail.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// Configuration, parsing and validation problems map to 2; numerical
    /// failures map to 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical { .. } | Error::NotPositiveDefinite(_) => 3,
            _ => 2,
        }
    }
}

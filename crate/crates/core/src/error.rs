use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported conversion: {0}")]
    UnsupportedConversion(String),

    #[error("invalid start: {0}")]
    InvalidStart(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unidentifiable-bracket: {0}")]
    UnidentifiableBracket(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("bootstrap unstable: {failed} of {total} resample fits failed")]
    BootstrapUnstable { failed: usize, total: usize },

    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },

    #[error("{}validation error in `{field}`: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Validation {
        line: Option<usize>,
        field: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn validation(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Validation {
            line: None,
            field: field.into(),
            message: msg.into(),
        }
    }

    /// Attaches a 1-based line number to validation errors.
    pub(crate) fn at_line(self, n: usize) -> Self {
        match self {
            Error::Validation { field, message, .. } => Error::Validation {
                line: Some(n),
                field,
                message,
            },
            other => other,
        }
    }
}

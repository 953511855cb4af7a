use thiserror::Error;

/// Errors raised by the flowdub core.
///
/// Variants are grouped by how a caller should react: `Shape` and
/// `InvalidArgument` are configuration mistakes, `NonFinite` is a numeric
/// failure, and `Format`/`Io`/`Json` come from the file layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: {detail}")]
    Shape { context: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {context}{}", step_suffix(*.step))]
    NonFinite { context: &'static str, step: Option<usize> },

    #[error("infeasible input: {0}")]
    Infeasible(String),

    #[error("malformed tensor file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn step_suffix(step: Option<usize>) -> String {
    match step {
        Some(s) => format!(" at step {s}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn shape(context: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            context,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn non_finite(context: &'static str) -> Self {
        Error::NonFinite { context, step: None }
    }

    /// True for failures caused by NaN/Inf rather than bad configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use std::fmt;
use std::path::Path;

use serde::Serialize;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Serialize)]
pub struct CliError {
    #[serde(skip)]
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            kind: "usage",
            message: message.into(),
            step: None,
        }
    }

    pub fn input(path: &Path, err: impl fmt::Display) -> Self {
        Self {
            code: EXIT_USAGE,
            kind: "input",
            message: format!("{}: {err}", path.display()),
            step: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl From<flowdub::Error> for CliError {
    fn from(e: flowdub::Error) -> Self {
        use flowdub::Error as E;
        let (code, kind, step) = match &e {
            E::NonFinite { step, .. } => (EXIT_NUMERIC, "numeric", *step),
            E::Shape { .. } => (EXIT_USAGE, "shape", None),
            E::InvalidArgument(_) => (EXIT_USAGE, "config", None),
            E::Infeasible(_) => (EXIT_USAGE, "infeasible", None),
            E::Format(_) => (EXIT_USAGE, "format", None),
            E::Io(_) => (EXIT_USAGE, "io", None),
            E::Json(_) => (EXIT_USAGE, "json", None),
        };
        Self {
            code,
            kind,
            message: e.to_string(),
            step,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        flowdub::Error::from(e).into()
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        flowdub::Error::from(e).into()
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

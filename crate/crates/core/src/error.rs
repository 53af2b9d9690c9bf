use std::path::PathBuf;

use thiserror::Error;

use crate::registry::Diagnostic;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{}", format_diagnostics(.0))]
    Validation(Vec<Diagnostic>),

    #[error("{source_name}:{line}: {message}")]
    Trace {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("unknown MPI function `{0}`")]
    UnknownFunction(String),

    #[error("unresolved MPI identifiers: {} (extend the registry or ignore them explicitly)", .0.join(", "))]
    UnresolvedIdentifiers(Vec<String>),

    #[error("coverage error: `{0}` is not a member of any block")]
    Coverage(String),

    #[error("exact cover refused: {candidates} candidate blocks exceed the limit of {limit}; use the greedy strategy")]
    ExactTooLarge { candidates: usize, limit: usize },

    #[error("empty profile: {0}")]
    EmptyProfile(String),

    #[error("average layer number is undefined for a zero total count")]
    UndefinedMetric,

    #[error("function `{0}` has no layer in the assignment")]
    MissingLayer(String),

    #[error("stack construction error: {0}")]
    StackConfig(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short stable tag used in CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Trace { .. } => "trace",
            Error::UnknownFunction(_) => "unknown-function",
            Error::UnresolvedIdentifiers(_) => "unresolved",
            Error::Coverage(_) => "coverage",
            Error::ExactTooLarge { .. } => "exact-limit",
            Error::EmptyProfile(_) => "empty-profile",
            Error::UndefinedMetric => "undefined-metric",
            Error::MissingLayer(_) => "missing-layer",
            Error::StackConfig(_) => "stack-config",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    let mut out = String::from("validation error: ");
    let shown: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
    out.push_str(&shown.join("; "));
    out
}

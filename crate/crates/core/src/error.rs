use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric input lies outside the domain an operation accepts (NaN, inf).
    #[error("input domain: {0}")]
    InputDomain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Input data is well-formed but unusable (empty masks, all-NaN channels, ...).
    #[error("data error: {0}")]
    Data(String),

    #[error("placement infeasible after {attempts} attempts over {backoffs} scale backoffs")]
    PlacementInfeasible { attempts: usize, backoffs: usize },

    #[error("empty bank: {0}")]
    EmptyBank(&'static str),

    #[error("no keypoints evaluated")]
    EmptyReport,

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Binary format violation (NIfTI header, truncated payload).
    #[error("format error: {0}")]
    Format(String),

    /// JSON document failed to parse or validate.
    #[error("schema error: {0}")]
    Schema(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable code, used by the CLI and host-language bindings.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InputDomain(_) => "input_domain",
            Error::Shape(_) => "shape",
            Error::Parameter(_) => "parameter",
            Error::Data(_) => "data",
            Error::PlacementInfeasible { .. } => "placement_infeasible",
            Error::EmptyBank(_) => "empty_bank",
            Error::EmptyReport => "empty_report",
            Error::Io { .. } => "io",
            Error::Format(_) => "format",
            Error::Schema(_) => "schema",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Schema(e.to_string())
    }
}

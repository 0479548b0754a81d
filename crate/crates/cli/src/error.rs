use std::path::PathBuf;

use mbadmm::solvers::UnknownScheme;
use thiserror::Error;

/// Stable process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const NOT_CONVERGED: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const IO: i32 = 3;
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario line {line}, column {column}, at `{field}`: {message}")]
    Parse {
        field: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    UnknownScheme(UnknownScheme),
    #[error("generator `{generator}` needs parameter `{parameter}`")]
    MissingParameter { generator: String, parameter: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Format(#[from] mbadmm::error::FormatError),
}

impl ScenarioError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Io { .. } => exit::IO,
            _ => exit::CONFIG,
        }
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        use mbadmm::error::FormatError;
        match self {
            RunError::Scenario(e) => e.exit_code(),
            RunError::Config(_) => exit::CONFIG,
            RunError::Io { .. } | RunError::Format(FormatError::Io { .. }) => exit::IO,
            RunError::Format(_) => exit::CONFIG,
        }
    }
}

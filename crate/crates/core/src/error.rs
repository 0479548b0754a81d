use thiserror::Error;

/// Errors raised while building or evaluating a [`crate::ProblemSpec`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("problem has no blocks")]
    EmptyBlocks,

    /// `block` is 1-based, matching how blocks are numbered in reports.
    #[error("dimension mismatch in block {block}: {detail}")]
    DimensionMismatch { block: usize, detail: String },

    #[error("invalid local set in block {block}: {detail}")]
    InvalidLocalSet { block: usize, detail: String },

    #[error("invalid objective in block {block}: {detail}")]
    InvalidObjective { block: usize, detail: String },

    #[error("iterate does not conform to the problem: {0}")]
    NonConformingState(String),

    #[error("penalty parameter must be positive, got {0}")]
    NonPositiveRho(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProxError {
    #[error("threshold must be nonnegative, got {0}")]
    NegativeThreshold(f64),

    #[error("inverted bounds at coordinate {index}: lo = {lo} > hi = {hi}")]
    InvertedBounds { index: usize, lo: f64, hi: f64 },

    #[error("vectors have inconsistent lengths: {0}")]
    Ragged(String),

    #[error("ill-posed subproblem: {0}")]
    IllPosed(String),

    #[error("invalid subproblem request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("scheme {scheme} requires {expected} blocks, problem has {actual}")]
    WrongScheme {
        scheme: &'static str,
        expected: &'static str,
        actual: usize,
    },

    #[error("invalid solver configuration: {0}")]
    Config(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error(transparent)]
    Problem(#[from] ProblemError),

    #[error(transparent)]
    Prox(#[from] ProxError),
}

/// Errors reading or writing interchange and trace files.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed document: {0}")]
    Parse(String),

    #[error("unsupported format_version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Problem(#[from] ProblemError),
}

impl FormatError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

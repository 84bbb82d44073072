use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
///
/// Every variant maps onto a stable `kind` tag used by the command line
/// (`error[kind]: ...`) and onto a process exit code.
#[derive(Debug, Error)]
pub enum MimalError {
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("pairing: {0}")]
    Pairing(String),

    #[error("folds: {0}")]
    Fold(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("numeric failure at iteration {iteration}: {message}")]
    Numeric { iteration: usize, message: String },

    #[error("optimizer diverged after {iterations} iterations: {message}")]
    Optimizer { iterations: usize, message: String },

    #[error("variance: {0}")]
    Variance(String),

    #[error("oracle: {0}")]
    Oracle(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl MimalError {
    pub fn kind(&self) -> &'static str {
        match self {
            MimalError::Parse { .. } => "parse",
            MimalError::Shape(_) => "shape",
            MimalError::Pairing(_) => "pairing",
            MimalError::Fold(_) => "fold",
            MimalError::Input(_) => "input",
            MimalError::Numeric { .. } => "numeric",
            MimalError::Optimizer { .. } => "optimizer",
            MimalError::Variance(_) => "variance",
            MimalError::Oracle(_) => "oracle",
            MimalError::Unsupported(_) => "unsupported",
            MimalError::Config(_) => "config",
            MimalError::Io { .. } => "io",
        }
    }

    /// Exit code used by the binary: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            MimalError::Config(_) | MimalError::Unsupported(_) => 1,
            MimalError::Parse { .. }
            | MimalError::Shape(_)
            | MimalError::Pairing(_)
            | MimalError::Fold(_)
            | MimalError::Input(_)
            | MimalError::Variance(_)
            | MimalError::Io { .. } => 2,
            MimalError::Numeric { .. } | MimalError::Optimizer { .. } | MimalError::Oracle(_) => 3,
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        MimalError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, MimalError>;

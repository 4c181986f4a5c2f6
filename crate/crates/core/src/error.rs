use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dims(String),

    #[error("mask has no included voxels")]
    EmptyMask,

    #[error("index out of range: {0}")]
    Index(String),

    #[error("malformed NIfTI at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("not enough degrees of freedom: {nt} scans for design rank {rank}")]
    Dof { nt: usize, rank: usize },

    #[error("training failed: {0}")]
    Training(String),

    #[error("solver did not converge after {iterations} iterations (duality gap {gap:.3e})")]
    Convergence { iterations: usize, gap: f64 },

    #[error("cannot stratify: {0}")]
    Stratify(String),

    #[error("AUC undefined: test labels contain a single class")]
    AucUndefined,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("distributions cannot be paired: {0}")]
    Pairing(String),

    #[error("division by zero: {0}")]
    Division(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(path)
        } else {
            Error::Io { path, source }
        }
    }

    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dims(_) => "dims",
            Error::EmptyMask => "empty_mask",
            Error::Index(_) => "index",
            Error::Format { .. } => "format",
            Error::Validation(_) => "validation",
            Error::Dof { .. } => "dof",
            Error::Training(_) => "training",
            Error::Convergence { .. } => "convergence",
            Error::Stratify(_) => "stratify",
            Error::AucUndefined => "auc_undefined",
            Error::Degenerate(_) => "degenerate",
            Error::Pairing(_) => "pairing",
            Error::Division(_) => "division",
            Error::Config(_) => "config",
            Error::MissingInput(_) => "missing_input",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
        }
    }
}

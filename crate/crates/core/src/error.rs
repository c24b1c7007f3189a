use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Verification pair category, used to report which score list is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairCategory {
    Genuine,
    Impostor,
}

impl std::fmt::Display for PairCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PairCategory::Genuine => f.write_str("genuine"),
            PairCategory::Impostor => f.write_str("impostor"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("vector norm {norm:e} is too small to normalize")]
    ZeroNorm { norm: f64 },

    #[error("mean of embeddings has norm {norm:e}; renormalized mean is undefined")]
    DegenerateMean { norm: f64 },

    #[error("network output has norm {norm:e} before normalization")]
    ZeroOutput { norm: f64 },

    #[error("unknown identity {0}")]
    UnknownIdentity(u32),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("non-finite parameters after epoch {epoch}")]
    NonFiniteParameters { epoch: usize },

    #[error("no {category} pairs for group {group}")]
    EmptyCategory { group: u8, category: PairCategory },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Short machine-readable category, used for CLI error lines and CSV flags.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::DimensionMismatch { .. } => "dimension",
            Error::ZeroNorm { .. } => "zero-norm",
            Error::DegenerateMean { .. } => "degenerate-mean",
            Error::ZeroOutput { .. } => "zero-output",
            Error::UnknownIdentity(_) => "unknown-identity",
            Error::NonFiniteLoss { .. } => "non-finite-loss",
            Error::NonFiniteParameters { .. } => "non-finite-parameters",
            Error::EmptyCategory { .. } => "empty-category",
            Error::Config(_) => "config",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

pub(crate) fn ensure_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

//! Error type shared by every module of the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated (nonpositive spacing,
    /// bad safety factor, mismatched dimensions chosen by the caller, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An index was outside the container it addresses.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// The requested time step violates the CFL stability bound.
    #[error("CFL stability violated: dt = {dt}, limit = {limit}")]
    Stability { dt: f64, limit: f64 },

    /// A non-finite field value appeared during time stepping.
    #[error("simulation diverged at step {step}: non-finite field value")]
    Divergence { step: usize },

    /// A pivot block of a (block) Cholesky factorization was not positive
    /// definite. Carries the failing block index so callers can raise the
    /// mass-matrix regularization and retry.
    #[error("matrix not positive definite at block {block}")]
    NotPositiveDefinite { block: usize },

    /// The spectrum that must be nonnegative (the compressed-pulse transform)
    /// was significantly negative.
    #[error("spectral validity: {0}")]
    SpectralValidity(String),

    /// A linear operator that must be invertible was singular.
    #[error("singular operator: {0}")]
    Singular(String),

    /// The regularization operator could not be set up (rank deficiency).
    #[error("regularization setup failed: {0}")]
    RegularizationSetup(String),

    /// Two containers that must share a lattice or shape did not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A scenario or input file failed validation.
    #[error("validation: {0}")]
    Validation(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("file format: {0}")]
    FileFormat(String),
}

pub type Result<T> = std::result::Result<T, Error>;

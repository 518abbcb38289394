//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any toolkit operation.
#[derive(Debug, Error)]
pub enum Error {
    /// Operands live on spaces of incompatible dimension.
    #[error("dimension mismatch: {context} (left {left}, right {right})")]
    DimensionMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    /// A mixed-parity operator was tensored across a fermionic boundary.
    /// Decompose into even and odd parts first.
    #[error("mixed-parity operator tensored across a fermionic boundary")]
    MixedParityOnFermionicSpace,

    /// A definite parity was required but the operator is mixed.
    #[error("operator has mixed parity where definite parity is required")]
    MixedParity,

    /// Factor index outside the composite space.
    #[error("factor index {index} out of range for composite of {len} factors")]
    IndexOutOfRange { index: usize, len: usize },

    /// Per-operator parity marks admit no consistent basis grading.
    #[error("invalid parity assignment: {0}")]
    InvalidParityAssignment(String),

    /// A record does not form a usable uniform time grid.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A jump was demanded while the filtered intensity sat below the
    /// ratio floor; the record and the model disagree.
    #[error("degenerate jump ratio at step {step}: intensity {intensity:.3e} below floor {floor:.3e}")]
    DegenerateRatio {
        step: usize,
        intensity: f64,
        floor: f64,
    },

    /// A state or run invariant failed beyond tolerance.
    #[error("invariant violation at step {step}: {what} (violation {violation:.3e})")]
    InvariantViolation {
        what: String,
        step: usize,
        violation: f64,
    },

    /// The vectorized Liouvillian has more than one numerical null vector.
    #[error("steady state is not unique: numerical nullity {nullity}")]
    NonUniqueSteadyState { nullity: usize },

    /// More than the tolerated fraction of probability mass reached the
    /// boundary cells of the finite-difference grid.
    #[error("boundary mass leak at step {step}: boundary fraction {fraction:.3e}")]
    BoundaryMassLeak { step: usize, fraction: f64 },

    /// A model failed validation and was rejected by a downstream module.
    #[error("model rejected: {0}")]
    InvalidModel(String),

    /// A precondition on caller-supplied input failed.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// File serialization problems.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A tabular file failed to parse.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

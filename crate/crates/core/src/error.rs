use thiserror::Error;

/// Errors raised by the numerical kernels and the calculus routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("polyhedron is empty")]
    EmptyPolyhedron,
    #[error("polyhedron is unbounded")]
    Unbounded,
    #[error("dimension {dim} exceeds the enumeration limit {limit}")]
    DimensionTooLarge { dim: usize, limit: usize },
    #[error("point is not in the set (violation {0:e})")]
    PointNotInSet(f64),
    #[error("point is not in the domain of the outer function")]
    PointNotInDomain,
    #[error("vector is not a subgradient at the given point")]
    NotASubgradient,
    #[error("subderivative is not finite in this direction")]
    SubderivativeNotFinite,
    #[error("direction is not tangent to the domain")]
    TangentPreconditionFailed,
    #[error("base point is infeasible")]
    BasePointInfeasible,
    #[error("difference quotients diverge to minus infinity")]
    NegativeInfinityDetected,
    #[error("direction is not in the critical cone")]
    CriticalConePreconditionFailed,
    #[error("multiplier set is empty: v is not in the subdifferential")]
    EmptyMultiplierSet,
    #[error("clustered eigenvalue: multiplier is not determined by the affine condition")]
    UnsupportedSpectralMultiplicity,
    #[error("eigenvalue multiplicity at the base point does not match the function's index {0}")]
    MultiplicityMismatch(usize),
    #[error("unsupported outer function for this operation: {0}")]
    UnsupportedTag(String),
    #[error("base point is not stationary")]
    NotStationary,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

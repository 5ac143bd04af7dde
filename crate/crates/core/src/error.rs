use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input points are not full-dimensional")]
    DegenerateInput,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("half-space intersection is unbounded")]
    Unbounded,
    #[error("half-space intersection is empty")]
    Empty,
    #[error("origin is not in the interior of the polytope")]
    OriginNotInterior,
    #[error("polytope is not Fano-normalized (some facet offset differs from 1)")]
    NotFanoNormalized,
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("input too large: {0}")]
    TooLarge(String),
    #[error("polytope barycenter is not the origin (not K-semistable)")]
    NotSemistable,
    #[error("integral of exp(-phi) diverges: {0}")]
    TailDivergence(String),
    #[error("optimizer did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("dual potential is not convex: {0}")]
    NonConvexInput(String),
    #[error("Hessian is singular: {0}")]
    HessianSingular(String),
    #[error("dataset mixes dimensions: expected {expected}, found {found}")]
    MixedDimensions { expected: usize, found: usize },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

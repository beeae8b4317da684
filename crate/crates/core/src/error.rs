use thiserror::Error;

/// Errors raised by model construction and the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid spin: 2S = {0} must be a positive integer")]
    InvalidSpin(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("hamiltonian is not hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("model has no parity operator")]
    MissingParity,

    #[error("superoperator dimension {dim} exceeds the dense cap {cap}")]
    CapExceeded { dim: usize, cap: usize },

    #[error("eigensolver failed to converge on a {dim}x{dim} matrix (max |entry| {max_entry:.3e})")]
    EigenSolver { dim: usize, max_entry: f64 },

    /// `gap` is |Re λ₁| for the spectral check, the smallest eigenvalue estimate of the
    /// trace-bordered matrix for the bordered check, and a relative pivot for the rank check.
    #[error("zero eigenvalue is degenerate (separation {gap:.3e}); steady state not unique")]
    DegenerateSteadyState { gap: f64 },

    #[error("steady state has eigenvalue {0:.3e} below -1e-6")]
    NegativeSteadyState(f64),

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),

    #[error("integrator step size underflow at t = {t:.6e} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("trace drifted by {drift:.3e} at t = {t:.6e}")]
    TraceDrift { t: f64, drift: f64 },

    #[error("state norm collapsed below 1e-14 at t = {0:.6e}")]
    NormCollapse(f64),

    #[error("exceptional point: gamma = g = {0} is the phase boundary")]
    ExceptionalPoint(f64),

    #[error("sector q = {q} out of range for 2S = {two_s}")]
    SectorOutOfRange { q: i64, two_s: u32 },

    #[error("degenerate energy denominator between sectors {q} and {k}")]
    DegenerateDenominator { q: i64, k: i64 },

    #[error("need at least {needed} distinct values, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

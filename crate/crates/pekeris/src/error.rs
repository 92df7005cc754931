//! Crate-wide error type.

use thiserror::Error;

use crate::exact::Var;

/// Errors surfaced by the exact-arithmetic, operator, transfer, assembly,
/// spectral and characteristic-polynomial layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("variable universes differ: {left} vs {right}")]
    UniverseMismatch { left: String, right: String },

    #[error("variable {0} is not part of the universe")]
    VariableOutsideUniverse(Var),

    #[error("variable {0} is unbound at evaluation")]
    UnboundVariable(Var),

    #[error("operation undefined for the zero polynomial")]
    ZeroPolynomial,

    #[error("derivative order {order} exceeds the second-order cap")]
    DerivativeOrderExceeded { order: u32 },

    #[error("change-of-variable maps are not mutual inverses: {0}")]
    MapsNotInverse(String),

    #[error("gauge exponent must not involve the differentiation variables: {0}")]
    GaugeNotConstant(Var),

    #[error("operator carries negative eps valuation {0}; clear it before applying")]
    NegativeEpsValuation(i64),

    #[error("operator fails the Laguerre transfer precondition:\n{0}")]
    EulerViolation(String),

    #[error("bare-derivative defects do not cancel during transfer:\n{0}")]
    ResidualDefects(String),

    #[error(
        "derived recurrence does not have the expected shape: \
         {terms} stencil terms (expected {expected_terms}), \
         max (l,m,n) degree {degree} (expected {expected_degree}), \
         deg_Z {deg_z}, deg_eps {deg_eps}"
    )]
    DerivationMismatch {
        terms: usize,
        expected_terms: usize,
        degree: u32,
        expected_degree: u32,
        deg_z: u32,
        deg_eps: u32,
    },

    #[error("recurrence coefficient has eps degree {0} > 1; cannot split into a linear pencil")]
    EpsDegreeTooHigh(u32),

    #[error("pencil entry overflows 64-bit integers at row {row}")]
    EntryOverflow { row: usize },

    #[error("empty pencil (dimension 0)")]
    EmptyPencil,

    #[error("no determinant sign change in (0, {hi}]; scan trace:\n{trace}")]
    NoRootFound { hi: f64, trace: String },

    #[error("inverse iteration did not converge within {iterations} iterations (residual {residual:e})")]
    IterationDiverged { iterations: usize, residual: f64 },

    #[error("({r1}, {r2}, {r12}) violates the triangle inequality")]
    TriangleViolation { r1: f64, r2: f64, r12: f64 },

    #[error("prime pool exhausted before CRT stabilization ({used} primes used)")]
    InconclusiveCrt { used: usize },

    #[error("characteristic polynomial root check failed: {0}")]
    Consistency(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {detail}")]
    Parse { what: String, detail: String },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

//! Ground states of two-electron atoms by the Pekeris method.
//!
//! The crate derives, from first principles and in exact arithmetic, the
//! 33-term recurrence satisfied by the Laguerre expansion coefficients of
//! the two-electron S-state wave function in perimetric coordinates, then
//! assembles truncated integer matrix pencils `M(eps) = A - eps B` and finds
//! the largest generalized eigenvalue, giving the ground-state energy
//! `E = -eps^2` in atomic units; an exact modular route computes the full
//! characteristic polynomial `det(A - eps B)` over the integers.
//!
//! The layers, bottom up:
//!
//! * [`exact`] - arbitrary-precision rationals and multivariate polynomials;
//! * [`diffop`] - linear differential operators and their transformations;
//! * [`pipeline`] - the concrete operator in `(r1, r2, r12)` and its
//!   perimetric, gauge-fixed, cleared form;
//! * [`transfer`] - Laguerre-relation rewriting of the operator into a
//!   banded recurrence stencil;
//! * [`assembly`] - basis enumeration, symmetry folding and exact pencil
//!   assembly;
//! * [`spectral`] - determinant-sign root scanning, inverse iteration, and
//!   wave-function evaluation;
//! * [`charpoly`] - exact characteristic polynomials by modular evaluation,
//!   interpolation and Chinese remaindering.

pub mod assembly;
pub mod cache;
pub mod charpoly;
pub mod diffop;
pub mod error;
pub mod exact;
pub mod pipeline;
pub mod report;
pub mod spectral;
pub mod transfer;

pub use error::{Error, Result};

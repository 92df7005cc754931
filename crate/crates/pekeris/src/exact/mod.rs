//! Exact arithmetic foundation: arbitrary-precision rationals and sparse
//! multivariate polynomials over a closed, globally ordered variable set.
//!
//! Rationals are kept in lowest terms with positive denominator throughout
//! (the `num-rational` canonical form), so structural equality is the only
//! equality test anywhere in the crate. Negative powers of `eps` never
//! appear inside a polynomial; the operator layer tracks them as a separate
//! integer valuation.

mod poly;
mod var;

pub use poly::{Monomial, MultiPoly};
pub use var::{Universe, Var};

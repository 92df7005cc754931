//! The closed variable universe shared by the whole derivation.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the twelve symbols the derivation ever touches.
///
/// The declaration order is the canonical total order used for monomial
/// comparisons and text rendering; it never changes at runtime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Var {
    R1,
    R2,
    R12,
    U,
    V,
    W,
    L,
    M,
    N,
    Z,
    Eps,
    E,
}

impl Var {
    pub const ALL: [Var; 12] = [
        Var::R1,
        Var::R2,
        Var::R12,
        Var::U,
        Var::V,
        Var::W,
        Var::L,
        Var::M,
        Var::N,
        Var::Z,
        Var::Eps,
        Var::E,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Var::R1 => "r1",
            Var::R2 => "r2",
            Var::R12 => "r12",
            Var::U => "u",
            Var::V => "v",
            Var::W => "w",
            Var::L => "l",
            Var::M => "m",
            Var::N => "n",
            Var::Z => "Z",
            Var::Eps => "eps",
            Var::E => "E",
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An ordered subset of [`Var::ALL`]. Polynomials over different universes
/// never mix implicitly; every binary operation checks for equality first.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Universe(Arc<[Var]>);

impl Universe {
    /// Builds a universe from the given variables, sorted into canonical
    /// order with duplicates removed.
    pub fn new(vars: &[Var]) -> Self {
        let mut v: Vec<Var> = vars.to_vec();
        v.sort();
        v.dedup();
        Universe(v.into())
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, var: Var) -> bool {
        self.index_of(var).is_some()
    }

    pub fn index_of(&self, var: Var) -> Option<usize> {
        self.0.binary_search(&var).ok()
    }

    pub(crate) fn index_or_err(&self, var: Var) -> Result<usize> {
        self.index_of(var)
            .ok_or(Error::VariableOutsideUniverse(var))
    }

    pub(crate) fn check_same(&self, other: &Universe) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::UniverseMismatch {
                left: self.to_string(),
                right: other.to_string(),
            })
        }
    }
}

impl fmt::Display for Universe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "}}")
    }
}

impl fmt::Debug for Universe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

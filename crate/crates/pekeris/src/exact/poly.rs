//! Sparse multivariate polynomials with exact rational coefficients.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

use super::var::{Universe, Var};

/// Exponent vector aligned with a universe's variable order, compared in
/// graded-lexicographic order (total degree first, then exponents).
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    fn constant(n_vars: usize) -> Self {
        Monomial(vec![0; n_vars])
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total_degree()
            .cmp(&other.total_degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A multivariate polynomial: a finite map from monomials to nonzero
/// rational coefficients. The zero polynomial is the empty map.
#[derive(Clone, PartialEq, Eq)]
pub struct MultiPoly {
    universe: Universe,
    terms: BTreeMap<Monomial, BigRational>,
}

impl MultiPoly {
    pub fn zero(universe: &Universe) -> Self {
        MultiPoly {
            universe: universe.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn one(universe: &Universe) -> Self {
        Self::constant(universe, BigRational::one())
    }

    pub fn constant(universe: &Universe, value: BigRational) -> Self {
        let mut terms = BTreeMap::new();
        if !value.is_zero() {
            terms.insert(Monomial::constant(universe.len()), value);
        }
        MultiPoly {
            universe: universe.clone(),
            terms,
        }
    }

    pub fn from_integer(universe: &Universe, value: i64) -> Self {
        Self::constant(universe, BigRational::from_integer(BigInt::from(value)))
    }

    pub fn var(universe: &Universe, var: Var) -> Result<Self> {
        Self::term(universe, &[(var, 1)], BigRational::one())
    }

    /// Single term `coeff * prod var^exp`.
    pub fn term(universe: &Universe, powers: &[(Var, u32)], coeff: BigRational) -> Result<Self> {
        let mut exps = vec![0u32; universe.len()];
        for &(var, e) in powers {
            exps[universe.index_or_err(var)?] += e;
        }
        let mut terms = BTreeMap::new();
        if !coeff.is_zero() {
            terms.insert(Monomial(exps), coeff);
        }
        Ok(MultiPoly {
            universe: universe.clone(),
            terms,
        })
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn iter_terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    /// Total degree; zero for the zero polynomial.
    pub fn total_degree(&self) -> u32 {
        self.terms
            .keys()
            .map(Monomial::total_degree)
            .max()
            .unwrap_or(0)
    }

    pub fn degree_in(&self, var: Var) -> u32 {
        let Some(idx) = self.universe.index_of(var) else {
            return 0;
        };
        self.terms.keys().map(|mono| mono.0[idx]).max().unwrap_or(0)
    }

    /// Coefficient of the exact monomial given by `powers` (zero if absent).
    pub fn coefficient(&self, powers: &[(Var, u32)]) -> Result<BigRational> {
        let mut exps = vec![0u32; self.universe.len()];
        for &(var, e) in powers {
            exps[self.universe.index_or_err(var)?] += e;
        }
        Ok(self
            .terms
            .get(&Monomial(exps))
            .cloned()
            .unwrap_or_else(BigRational::zero))
    }

    fn insert_term(terms: &mut BTreeMap<Monomial, BigRational>, mono: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        match terms.entry(mono) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let sum = e.get() + &c;
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.universe.check_same(&other.universe)?;
        let mut terms = self.terms.clone();
        for (mono, c) in &other.terms {
            Self::insert_term(&mut terms, mono.clone(), c.clone());
        }
        Ok(MultiPoly {
            universe: self.universe.clone(),
            terms,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        MultiPoly {
            universe: self.universe.clone(),
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), -c.clone()))
                .collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.universe.check_same(&other.universe)?;
        let mut terms = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                Self::insert_term(&mut terms, ma.mul(mb), ca * cb);
            }
        }
        Ok(MultiPoly {
            universe: self.universe.clone(),
            terms,
        })
    }

    pub fn scale(&self, factor: &BigRational) -> Self {
        if factor.is_zero() {
            return Self::zero(&self.universe);
        }
        MultiPoly {
            universe: self.universe.clone(),
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), c * factor))
                .collect(),
        }
    }

    pub fn pow(&self, exponent: u32) -> Self {
        let mut acc = Self::one(&self.universe);
        for _ in 0..exponent {
            acc = acc.mul(self).expect("same universe");
        }
        acc
    }

    /// Re-expresses the polynomial over a larger universe.
    pub fn embed(&self, target: &Universe) -> Result<Self> {
        if &self.universe == target {
            return Ok(self.clone());
        }
        let mut positions = Vec::with_capacity(self.universe.len());
        for &v in self.universe.vars() {
            positions.push(target.index_or_err(v)?);
        }
        let mut terms = BTreeMap::new();
        for (mono, c) in &self.terms {
            let mut exps = vec![0u32; target.len()];
            for (k, &e) in mono.0.iter().enumerate() {
                exps[positions[k]] = e;
            }
            terms.insert(Monomial(exps), c.clone());
        }
        Ok(MultiPoly {
            universe: target.clone(),
            terms,
        })
    }

    /// Exact division by `var^exp`; every term must be divisible.
    pub fn div_var_pow(&self, var: Var, exp: u32) -> Result<Self> {
        let idx = self.universe.index_or_err(var)?;
        let mut terms = BTreeMap::new();
        for (mono, c) in &self.terms {
            if mono.0[idx] < exp {
                return Err(Error::Parse {
                    what: "polynomial division".into(),
                    detail: format!("term not divisible by {var}^{exp}"),
                });
            }
            let mut e = mono.0.clone();
            e[idx] -= exp;
            terms.insert(Monomial(e), c.clone());
        }
        Ok(MultiPoly {
            universe: self.universe.clone(),
            terms,
        })
    }

    /// Multiplies by `var^exp` (shifts every exponent vector).
    pub fn mul_var_pow(&self, var: Var, exp: u32) -> Result<Self> {
        let idx = self.universe.index_or_err(var)?;
        Ok(MultiPoly {
            universe: self.universe.clone(),
            terms: self
                .terms
                .iter()
                .map(|(m, c)| {
                    let mut e = m.0.clone();
                    e[idx] += exp;
                    (Monomial(e), c.clone())
                })
                .collect(),
        })
    }

    /// Exact simultaneous substitution. Bound variables are replaced by the
    /// given polynomials (which must live in `target`); unbound variables
    /// pass through and must therefore exist in `target` if they occur.
    pub fn substitute(
        &self,
        bindings: &BTreeMap<Var, MultiPoly>,
        target: &Universe,
    ) -> Result<Self> {
        for poly in bindings.values() {
            poly.universe.check_same(target)?;
        }
        let mut acc = Self::zero(target);
        for (mono, coeff) in &self.terms {
            let mut term = Self::constant(target, coeff.clone());
            for (idx, &exp) in mono.0.iter().enumerate() {
                if exp == 0 {
                    continue;
                }
                let var = self.universe.vars()[idx];
                term = match bindings.get(&var) {
                    Some(replacement) => term.mul(&replacement.pow(exp))?,
                    None => term.mul_var_pow(var, exp)?,
                };
            }
            acc = acc.add(&term)?;
        }
        Ok(acc)
    }

    /// Exact evaluation; every variable that occurs must be bound.
    pub fn evaluate(&self, point: &BTreeMap<Var, BigRational>) -> Result<BigRational> {
        let mut sum = BigRational::zero();
        for (mono, coeff) in &self.terms {
            let mut prod = coeff.clone();
            for (idx, &exp) in mono.0.iter().enumerate() {
                if exp == 0 {
                    continue;
                }
                let var = self.universe.vars()[idx];
                let value = point.get(&var).ok_or(Error::UnboundVariable(var))?;
                for _ in 0..exp {
                    prod *= value;
                }
            }
            sum += prod;
        }
        Ok(sum)
    }

    pub fn differentiate(&self, var: Var) -> Result<Self> {
        let idx = self.universe.index_or_err(var)?;
        let mut terms = BTreeMap::new();
        for (mono, coeff) in &self.terms {
            let exp = mono.0[idx];
            if exp == 0 {
                continue;
            }
            let mut e = mono.0.clone();
            e[idx] -= 1;
            Self::insert_term(
                &mut terms,
                Monomial(e),
                coeff * BigRational::from_integer(BigInt::from(exp)),
            );
        }
        Ok(MultiPoly {
            universe: self.universe.clone(),
            terms,
        })
    }

    /// Leading coefficient under the graded-lexicographic monomial order.
    pub fn leading_coefficient(&self) -> Option<&BigRational> {
        self.terms.values().next_back()
    }

    /// Splits `p = content * primitive` where the primitive part has
    /// coprime integer coefficients and a positive leading coefficient.
    pub fn content_primitive(&self) -> Result<(BigRational, MultiPoly)> {
        if self.is_zero() {
            return Err(Error::ZeroPolynomial);
        }
        let mut num_gcd = BigInt::zero();
        let mut den_lcm = BigInt::one();
        for c in self.terms.values() {
            num_gcd = num_gcd.gcd(c.numer());
            den_lcm = den_lcm.lcm(c.denom());
        }
        let mut content = BigRational::new(num_gcd, den_lcm);
        if self.leading_coefficient().unwrap().is_negative() {
            content = -content;
        }
        let inv = content.recip();
        let primitive = self.scale(&inv);
        Ok((content, primitive))
    }

    /// True when every coefficient is an integer.
    pub fn has_integer_coefficients(&self) -> bool {
        self.terms.values().all(|c| c.denom().is_one())
    }

    /// Renders one term (used by `Display`), omitting unit coefficients.
    fn fmt_term(&self, f: &mut fmt::Formatter<'_>, mono: &Monomial, c: &BigRational) -> fmt::Result {
        let abs = c.abs();
        let mut wrote_factor = false;
        if !abs.is_one() || mono.total_degree() == 0 {
            write!(f, "{abs}")?;
            wrote_factor = true;
        }
        for (idx, &exp) in mono.0.iter().enumerate() {
            if exp == 0 {
                continue;
            }
            if wrote_factor {
                write!(f, "*")?;
            }
            write!(f, "{}", self.universe.vars()[idx])?;
            if exp > 1 {
                write!(f, "^{exp}")?;
            }
            wrote_factor = true;
        }
        Ok(())
    }
}

/// Canonical rendering: terms in descending graded-lexicographic order,
/// explicit `^` powers and `*` products. Stable across runs.
impl fmt::Display for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (i, (mono, c)) in self.terms.iter().rev().enumerate() {
            if i == 0 {
                if c.is_negative() {
                    write!(f, "-")?;
                }
            } else if c.is_negative() {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            self.fmt_term(f, mono, c)?;
        }
        Ok(())
    }
}

impl fmt::Debug for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

//! Linear differential operators with polynomial coefficients.
//!
//! An operator is a finite sum of `MultiPoly` coefficients times derivative
//! monomials in an ordered set of differentiation variables, together with a
//! global integer power of `eps` multiplying the whole operator. Keeping that
//! valuation outside the coefficients keeps every coefficient a true
//! polynomial even while the perimetric substitution introduces `1/eps`
//! factors.
//!
//! Derivative monomials are capped at total order two: the operator this
//! crate cares about is second order, and anything higher signals a pipeline
//! bug, so construction asserts.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{MultiPoly, Universe, Var};

/// Derivative multi-index aligned with the operator's `diff_vars`.
pub type DerivIndex = Vec<u8>;

const MAX_TOTAL_ORDER: u32 = 2;

/// `eps^k * (sum of c_i * var_i)` with exact rational `c_i`.
#[derive(Clone, Debug)]
pub struct LinearForm {
    pub coeffs: Vec<(Var, BigRational)>,
    pub eps_power: i64,
}

impl LinearForm {
    pub fn new(coeffs: Vec<(Var, BigRational)>, eps_power: i64) -> Self {
        LinearForm { coeffs, eps_power }
    }

    fn coefficient_of(&self, var: Var) -> BigRational {
        self.coeffs
            .iter()
            .find(|(v, _)| *v == var)
            .map(|(_, c)| c.clone())
            .unwrap_or_else(BigRational::zero)
    }
}

/// Defines each map target variable as a [`LinearForm`] in source variables.
#[derive(Clone, Debug)]
pub struct LinearMap {
    pub entries: BTreeMap<Var, LinearForm>,
}

impl LinearMap {
    pub fn new(entries: Vec<(Var, LinearForm)>) -> Self {
        LinearMap {
            entries: entries.into_iter().collect(),
        }
    }

    /// Checks that `self` followed by `other` is the identity: substituting
    /// `other`'s forms into each of `self`'s forms must reproduce the bare
    /// target variable with zero net `eps` power.
    fn check_inverse_of(&self, other: &LinearMap) -> Result<()> {
        for (&target, form) in &self.entries {
            // target = eps^p * sum_i c_i src_i, src_i = eps^q_i * sum_j d_ij t_j
            let mut acc: BTreeMap<(Var, i64), BigRational> = BTreeMap::new();
            for (src, c) in &form.coeffs {
                let inner = other.entries.get(src).ok_or_else(|| {
                    Error::MapsNotInverse(format!("{src} has no image under the second map"))
                })?;
                for (t, d) in &inner.coeffs {
                    let key = (*t, form.eps_power + inner.eps_power);
                    let entry = acc.entry(key).or_insert_with(BigRational::zero);
                    *entry += c * d;
                }
            }
            acc.retain(|_, c| !c.is_zero());
            let expected_key = (target, 0);
            let ok = acc.len() == 1
                && acc
                    .get(&expected_key)
                    .map(|c| c.is_one())
                    .unwrap_or(false);
            if !ok {
                return Err(Error::MapsNotInverse(format!(
                    "composite image of {target} is not {target}"
                )));
            }
        }
        Ok(())
    }
}

/// A linear differential operator.
#[derive(Clone, PartialEq, Eq)]
pub struct DiffOp {
    diff_vars: Vec<Var>,
    universe: Universe,
    terms: BTreeMap<DerivIndex, MultiPoly>,
    eps_valuation: i64,
}

impl DiffOp {
    /// Empty operator over the given differentiation variables (sorted into
    /// canonical order) and coefficient universe.
    pub fn new(diff_vars: &[Var], universe: &Universe) -> Result<Self> {
        let mut vars = diff_vars.to_vec();
        vars.sort();
        vars.dedup();
        for &v in &vars {
            universe.index_or_err(v)?;
        }
        Ok(DiffOp {
            diff_vars: vars,
            universe: universe.clone(),
            terms: BTreeMap::new(),
            eps_valuation: 0,
        })
    }

    pub fn diff_vars(&self) -> &[Var] {
        &self.diff_vars
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn eps_valuation(&self) -> i64 {
        self.eps_valuation
    }

    pub fn set_eps_valuation(&mut self, v: i64) {
        self.eps_valuation = v;
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn iter_terms(&self) -> impl Iterator<Item = (&DerivIndex, &MultiPoly)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, index: &[u8]) -> Option<&MultiPoly> {
        self.terms.get(index)
    }

    fn position_of(&self, var: Var) -> Result<usize> {
        self.diff_vars
            .iter()
            .position(|&v| v == var)
            .ok_or(Error::VariableOutsideUniverse(var))
    }

    /// Adds `coeff * D^index`, merging with any existing term.
    pub fn add_term(&mut self, index: &[u8], coeff: MultiPoly) {
        assert_eq!(index.len(), self.diff_vars.len(), "derivative index arity");
        let order: u32 = index.iter().map(|&i| u32::from(i)).sum();
        assert!(
            order <= MAX_TOTAL_ORDER,
            "derivative total order {order} exceeds the second-order cap"
        );
        self.universe
            .check_same(coeff.universe())
            .expect("coefficient universe");
        if coeff.is_zero() {
            return;
        }
        match self.terms.entry(index.to_vec()) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let sum = e.get().add(&coeff).expect("same universe");
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }

    /// Convenience constructor: `coeff * prod D[var_i]`.
    pub fn term(
        diff_vars: &[Var],
        universe: &Universe,
        derivs: &[Var],
        coeff: MultiPoly,
    ) -> Result<Self> {
        let mut op = DiffOp::new(diff_vars, universe)?;
        let mut index = vec![0u8; op.diff_vars.len()];
        for &d in derivs {
            index[op.position_of(d)?] += 1;
        }
        op.add_term(&index, coeff);
        Ok(op)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.universe.check_same(&other.universe)?;
        assert_eq!(self.diff_vars, other.diff_vars, "differentiation variables");
        assert_eq!(
            self.eps_valuation, other.eps_valuation,
            "eps valuations must match before adding operators"
        );
        let mut out = self.clone();
        for (idx, c) in &other.terms {
            out.add_term(idx, c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(&-BigRational::one()))
    }

    pub fn scale(&self, factor: &BigRational) -> Self {
        let mut out = DiffOp {
            diff_vars: self.diff_vars.clone(),
            universe: self.universe.clone(),
            terms: BTreeMap::new(),
            eps_valuation: self.eps_valuation,
        };
        if factor.is_zero() {
            return out;
        }
        for (idx, c) in &self.terms {
            out.terms.insert(idx.clone(), c.scale(factor));
        }
        out
    }

    /// Exact application `sum coeff * D^index (f)`, including the operator's
    /// `eps` valuation (which must be non-negative to stay polynomial).
    pub fn apply_to_poly(&self, f: &MultiPoly) -> Result<MultiPoly> {
        let f = f.embed(&self.universe)?;
        let mut acc = MultiPoly::zero(&self.universe);
        for (index, coeff) in &self.terms {
            let mut df = f.clone();
            for (pos, &ord) in index.iter().enumerate() {
                for _ in 0..ord {
                    df = df.differentiate(self.diff_vars[pos])?;
                }
            }
            acc = acc.add(&coeff.mul(&df)?)?;
        }
        if self.eps_valuation < 0 {
            if acc.is_zero() {
                return Ok(acc);
            }
            return Err(Error::NegativeEpsValuation(self.eps_valuation));
        }
        if self.eps_valuation > 0 {
            acc = acc.mul_var_pow(Var::Eps, self.eps_valuation as u32)?;
        }
        Ok(acc)
    }

    /// Operator product `self . other` (apply `other` first), by the Leibniz
    /// rule. Panics if the product exceeds total derivative order two.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.universe.check_same(&other.universe)?;
        assert_eq!(self.diff_vars, other.diff_vars);
        let mut out = DiffOp::new(&self.diff_vars, &self.universe)?;
        out.eps_valuation = self.eps_valuation + other.eps_valuation;
        for (alpha, c) in &self.terms {
            for (beta, d) in &other.terms {
                // c D^alpha (d D^beta) = c * sum_{gamma <= alpha}
                //   binom(alpha,gamma) D^{alpha-gamma}(d) D^{gamma+beta}
                let mut stack = vec![(vec![0u8; alpha.len()], d.clone(), BigInt::one())];
                for (pos, &a) in alpha.iter().enumerate() {
                    let mut next = Vec::new();
                    for (gamma, poly, mult) in stack {
                        for g in 0..=a {
                            let mut gv = gamma.clone();
                            gv[pos] = g;
                            let mut p = poly.clone();
                            for _ in 0..(a - g) {
                                p = p.differentiate(self.diff_vars[pos])?;
                            }
                            let binom = binomial(u32::from(a), u32::from(g));
                            next.push((gv, p, &mult * binom));
                        }
                    }
                    stack = next;
                }
                for (gamma, poly, mult) in stack {
                    if poly.is_zero() {
                        continue;
                    }
                    let index: DerivIndex =
                        gamma.iter().zip(beta).map(|(g, b)| g + b).collect();
                    let coeff = c
                        .mul(&poly)?
                        .scale(&BigRational::from_integer(mult));
                    out.add_term(&index, coeff);
                }
            }
        }
        Ok(out)
    }

    /// Chain rule under an exact linear change of variables.
    ///
    /// `forward` defines each new variable as a linear form in the old ones
    /// (providing the constant Jacobian), `inverse` defines each old variable
    /// as a linear form in the new ones (rewriting the coefficients). The two
    /// maps are verified to compose to the identity before anything happens.
    pub fn change_vars_linear(
        &self,
        forward: &LinearMap,
        inverse: &LinearMap,
        new_diff_vars: &[Var],
        target: &Universe,
    ) -> Result<Self> {
        forward.check_inverse_of(inverse)?;
        inverse.check_inverse_of(forward)?;

        let mut new_vars = new_diff_vars.to_vec();
        new_vars.sort();
        new_vars.dedup();
        for &v in &new_vars {
            target.index_or_err(v)?;
        }
        target.index_or_err(Var::Eps)?;

        // d/d(old_i) = sum_j (coefficient of old_i in forward[new_j])
        //              * eps^{forward[new_j].eps_power} * d/d(new_j)
        let mut jacobian: BTreeMap<Var, Vec<(usize, BigRational, i64)>> = BTreeMap::new();
        for &old in &self.diff_vars {
            let mut row = Vec::new();
            for (j, &new) in new_vars.iter().enumerate() {
                let form = forward.entries.get(&new).ok_or_else(|| {
                    Error::MapsNotInverse(format!("forward map does not define {new}"))
                })?;
                let c = form.coefficient_of(old);
                if !c.is_zero() {
                    row.push((j, c, form.eps_power));
                }
            }
            jacobian.insert(old, row);
        }

        // Inverse forms as polynomials over the target universe.
        let mut inverse_polys: BTreeMap<Var, (MultiPoly, i64)> = BTreeMap::new();
        for (&old, form) in &inverse.entries {
            let mut poly = MultiPoly::zero(target);
            for (var, c) in &form.coeffs {
                poly = poly.add(&MultiPoly::term(target, &[(*var, 1)], c.clone())?)?;
            }
            inverse_polys.insert(old, (poly, form.eps_power));
        }

        // Collect contributions as (poly, eps_power) lists per derivative index.
        let mut pending: BTreeMap<DerivIndex, Vec<(MultiPoly, i64)>> = BTreeMap::new();
        for (alpha, coeff) in &self.terms {
            // Expand the derivative monomial through the constant Jacobian.
            let mut deriv_parts: Vec<(DerivIndex, BigRational, i64)> =
                vec![(vec![0u8; new_vars.len()], BigRational::one(), 0)];
            for (pos, &ord) in alpha.iter().enumerate() {
                let row = &jacobian[&self.diff_vars[pos]];
                for _ in 0..ord {
                    let mut next = Vec::new();
                    for (idx, c, p) in &deriv_parts {
                        for (j, cj, pj) in row {
                            let mut nidx = idx.clone();
                            nidx[*j] += 1;
                            next.push((nidx, c * cj, p + pj));
                        }
                    }
                    deriv_parts = next;
                }
            }

            // Rewrite the coefficient through the inverse map, one source
            // monomial at a time so the eps power can be tracked exactly.
            let mut coeff_parts: Vec<(MultiPoly, i64)> = Vec::new();
            for (mono, c) in coeff.iter_terms() {
                let mut poly = MultiPoly::constant(target, c.clone());
                let mut power = 0i64;
                for (k, &exp) in mono.exponents().iter().enumerate() {
                    if exp == 0 {
                        continue;
                    }
                    let var = coeff.universe().vars()[k];
                    match inverse_polys.get(&var) {
                        Some((form_poly, form_pow)) => {
                            poly = poly.mul(&form_poly.pow(exp))?;
                            power += form_pow * i64::from(exp);
                        }
                        None => {
                            poly = poly.mul_var_pow(var, exp)?;
                        }
                    }
                }
                coeff_parts.push((poly, power));
            }

            for (idx, c, p_deriv) in &deriv_parts {
                for (poly, p_coeff) in &coeff_parts {
                    let contribution = poly.scale(c);
                    if contribution.is_zero() {
                        continue;
                    }
                    pending
                        .entry(idx.clone())
                        .or_default()
                        .push((contribution, p_deriv + p_coeff));
                }
            }
        }

        let min_power = pending
            .values()
            .flatten()
            .map(|(_, p)| *p)
            .min()
            .unwrap_or(0);
        let mut out = DiffOp::new(&new_vars, target)?;
        out.eps_valuation = self.eps_valuation + min_power;
        for (idx, parts) in pending {
            for (poly, p) in parts {
                let shifted = poly.mul_var_pow(Var::Eps, (p - min_power) as u32)?;
                out.add_term(&idx, shifted);
            }
        }
        Ok(out)
    }

    /// Conjugation by `exp(g)` for a linear exponent `g = sum c_x * x`:
    /// returns `op'` with `exp(g) . op'(F) = op(exp(g) F)`, i.e. every
    /// `D_x` becomes `D_x + c_x`. The gradient coefficients must not involve
    /// the differentiation variables (that would make `g` nonlinear).
    pub fn gauge_conjugate(&self, gradient: &[(Var, MultiPoly)]) -> Result<Self> {
        let mut grads: BTreeMap<Var, MultiPoly> = BTreeMap::new();
        for (var, c) in gradient {
            self.position_of(*var)?;
            let c = c.embed(&self.universe)?;
            for &dv in &self.diff_vars {
                if c.degree_in(dv) > 0 {
                    return Err(Error::GaugeNotConstant(dv));
                }
            }
            grads.insert(*var, c);
        }
        let mut out = DiffOp::new(&self.diff_vars, &self.universe)?;
        out.eps_valuation = self.eps_valuation;
        for (alpha, coeff) in &self.terms {
            // Expand prod_i (D_i + c_i)^{alpha_i}.
            let mut parts: Vec<(DerivIndex, MultiPoly)> =
                vec![(vec![0u8; alpha.len()], MultiPoly::one(&self.universe))];
            for (pos, &ord) in alpha.iter().enumerate() {
                let var = self.diff_vars[pos];
                let grad = grads
                    .get(&var)
                    .cloned()
                    .unwrap_or_else(|| MultiPoly::zero(&self.universe));
                for _ in 0..ord {
                    let mut next = Vec::new();
                    for (idx, poly) in &parts {
                        let mut didx = idx.clone();
                        didx[pos] += 1;
                        next.push((didx, poly.clone()));
                        if !grad.is_zero() {
                            next.push((idx.clone(), poly.mul(&grad)?));
                        }
                    }
                    parts = next;
                }
            }
            for (idx, poly) in parts {
                out.add_term(&idx, coeff.mul(&poly)?);
            }
        }
        Ok(out)
    }

    /// Normalizes the operator: divides out the largest common `eps^k`,
    /// resets the valuation to zero, divides out the global rational content
    /// so all coefficients are coprime integers, and fixes the sign so the
    /// coefficient of the lexicographically smallest derivative index has a
    /// positive leading term.
    pub fn clear(&self) -> Result<Self> {
        if self.terms.is_empty() {
            let mut out = self.clone();
            out.eps_valuation = 0;
            return Ok(out);
        }
        let eps_min = match self.universe.index_of(Var::Eps) {
            Some(idx) => self
                .terms
                .values()
                .flat_map(|p| p.iter_terms().map(move |(m, _)| m.exponents()[idx]))
                .min()
                .unwrap_or(0),
            None => 0,
        };

        let mut num_gcd = BigInt::zero();
        let mut den_lcm = BigInt::one();
        for poly in self.terms.values() {
            for (_, c) in poly.iter_terms() {
                num_gcd = num_integer::Integer::gcd(&num_gcd, c.numer());
                den_lcm = num_integer::Integer::lcm(&den_lcm, c.denom());
            }
        }
        let mut content = BigRational::new(num_gcd, den_lcm);
        let anchor = self.terms.values().next().unwrap();
        if anchor
            .leading_coefficient()
            .map(Signed::is_negative)
            .unwrap_or(false)
        {
            content = -content;
        }
        let inv = content.recip();

        let mut out = DiffOp::new(&self.diff_vars, &self.universe)?;
        out.eps_valuation = 0;
        for (idx, poly) in &self.terms {
            let mut p = poly.scale(&inv);
            if eps_min > 0 {
                p = p.div_var_pow(Var::Eps, eps_min)?;
            }
            out.add_term(idx, p);
        }
        Ok(out)
    }

    /// Renames variables (a bijection within the universe), both in the
    /// differentiation slots and inside the coefficients.
    pub fn rename(&self, mapping: &BTreeMap<Var, Var>) -> Result<Self> {
        let image = |v: Var| mapping.get(&v).copied().unwrap_or(v);
        let new_vars: Vec<Var> = self.diff_vars.iter().map(|&v| image(v)).collect();
        let mut bindings = BTreeMap::new();
        for (&from, &to) in mapping {
            bindings.insert(from, MultiPoly::var(&self.universe, to)?);
        }
        let mut out = DiffOp::new(&new_vars, &self.universe)?;
        out.eps_valuation = self.eps_valuation;
        for (idx, coeff) in &self.terms {
            let mut new_idx = vec![0u8; out.diff_vars.len()];
            for (pos, &ord) in idx.iter().enumerate() {
                let target = image(self.diff_vars[pos]);
                new_idx[out.position_of(target)?] += ord;
            }
            out.add_term(&new_idx, coeff.substitute(&bindings, &self.universe)?);
        }
        Ok(out)
    }

    /// Substitutes inside every coefficient (used for `E -> -eps^2`).
    pub fn substitute_coefficients(
        &self,
        bindings: &BTreeMap<Var, MultiPoly>,
        target: &Universe,
    ) -> Result<Self> {
        for &v in &self.diff_vars {
            target.index_or_err(v)?;
        }
        let mut out = DiffOp::new(&self.diff_vars, target)?;
        out.eps_valuation = self.eps_valuation;
        for (idx, coeff) in &self.terms {
            out.add_term(idx, coeff.substitute(bindings, target)?);
        }
        Ok(out)
    }

    /// Stable JSON rendering: one entry per derivative index.
    pub fn to_json(&self) -> DiffOpJson {
        DiffOpJson {
            diff_vars: self.diff_vars.iter().map(|v| v.name().into()).collect(),
            eps_valuation: self.eps_valuation,
            terms: self
                .terms
                .iter()
                .map(|(idx, c)| DiffOpTermJson {
                    derivative: idx.clone(),
                    coefficient: c.to_string(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct DiffOpJson {
    pub diff_vars: Vec<String>,
    pub eps_valuation: i64,
    pub terms: Vec<DiffOpTermJson>,
}

#[derive(Debug, Serialize)]
pub struct DiffOpTermJson {
    pub derivative: Vec<u8>,
    pub coefficient: String,
}

impl fmt::Display for DiffOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.eps_valuation != 0 {
            writeln!(f, "eps^{} *", self.eps_valuation)?;
        }
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (idx, coeff)) in self.terms.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  ({coeff})")?;
            for (pos, &ord) in idx.iter().enumerate() {
                if ord == 0 {
                    continue;
                }
                write!(f, " * D[{}]", self.diff_vars[pos])?;
                if ord > 1 {
                    write!(f, "^{ord}")?;
                }
            }
        }
        Ok(())
    }
}

impl fmt::Debug for DiffOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

fn binomial(n: u32, k: u32) -> BigInt {
    let mut out = BigInt::one();
    for i in 0..k.min(n - k) {
        out = out * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    fn ratq(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn uni() -> Universe {
        Universe::new(&[Var::U, Var::V, Var::W, Var::Z, Var::Eps])
    }

    fn gauge_half() -> Vec<(Var, MultiPoly)> {
        // gradient of -(u+v+w)/2
        let u = uni();
        [Var::U, Var::V, Var::W]
            .iter()
            .map(|&v| (v, MultiPoly::constant(&u, ratq(-1, 2))))
            .collect()
    }

    #[test]
    fn apply_first_derivative() {
        let u = uni();
        let op = DiffOp::term(&[Var::U, Var::V, Var::W], &u, &[Var::U], MultiPoly::one(&u))
            .unwrap();
        let f = MultiPoly::term(&u, &[(Var::U, 2)], rat(1)).unwrap();
        let expected = MultiPoly::term(&u, &[(Var::U, 1)], rat(2)).unwrap();
        assert_eq!(op.apply_to_poly(&f).unwrap(), expected);
    }

    #[test]
    fn apply_weighted_second_derivative() {
        let u = uni();
        let op = DiffOp::term(
            &[Var::U, Var::V, Var::W],
            &u,
            &[Var::U, Var::U],
            MultiPoly::var(&u, Var::U).unwrap(),
        )
        .unwrap();
        let f = MultiPoly::term(&u, &[(Var::U, 3)], rat(1)).unwrap();
        let expected = MultiPoly::term(&u, &[(Var::U, 2)], rat(6)).unwrap();
        assert_eq!(op.apply_to_poly(&f).unwrap(), expected);
    }

    #[test]
    fn gauge_shifts_first_derivative() {
        let u = uni();
        let op = DiffOp::term(&[Var::U, Var::V, Var::W], &u, &[Var::U], MultiPoly::one(&u))
            .unwrap();
        let conj = op.gauge_conjugate(&gauge_half()).unwrap();
        assert_eq!(conj.num_terms(), 2);
        assert_eq!(
            conj.coefficient(&[0, 0, 0]).unwrap(),
            &MultiPoly::constant(&u, ratq(-1, 2))
        );
        assert_eq!(conj.coefficient(&[1, 0, 0]).unwrap(), &MultiPoly::one(&u));
    }

    #[test]
    fn gauge_expands_second_derivative() {
        // (D_u - 1/2)^2 = D_u^2 - D_u + 1/4
        let u = uni();
        let op = DiffOp::term(
            &[Var::U, Var::V, Var::W],
            &u,
            &[Var::U, Var::U],
            MultiPoly::one(&u),
        )
        .unwrap();
        let conj = op.gauge_conjugate(&gauge_half()).unwrap();
        assert_eq!(
            conj.coefficient(&[0, 0, 0]).unwrap(),
            &MultiPoly::constant(&u, ratq(1, 4))
        );
        assert_eq!(
            conj.coefficient(&[1, 0, 0]).unwrap(),
            &MultiPoly::constant(&u, rat(-1))
        );
        assert_eq!(conj.coefficient(&[2, 0, 0]).unwrap(), &MultiPoly::one(&u));
    }

    #[test]
    fn gauge_product_rule_oracle() {
        // conjugate(u * D_u) applied to 1 equals -u/2.
        let u = uni();
        let op = DiffOp::term(
            &[Var::U, Var::V, Var::W],
            &u,
            &[Var::U],
            MultiPoly::var(&u, Var::U).unwrap(),
        )
        .unwrap();
        let conj = op.gauge_conjugate(&gauge_half()).unwrap();
        let result = conj.apply_to_poly(&MultiPoly::one(&u)).unwrap();
        let expected = MultiPoly::term(&u, &[(Var::U, 1)], ratq(-1, 2)).unwrap();
        assert_eq!(result, expected);
    }

    #[test]
    fn gauge_rejects_nonconstant_gradient() {
        let u = uni();
        let op = DiffOp::term(&[Var::U, Var::V, Var::W], &u, &[Var::U], MultiPoly::one(&u))
            .unwrap();
        let bad = vec![(Var::U, MultiPoly::var(&u, Var::V).unwrap())];
        assert!(matches!(
            op.gauge_conjugate(&bad),
            Err(Error::GaugeNotConstant(Var::V))
        ));
    }

    #[test]
    fn clear_resets_valuation() {
        let u = uni();
        let mut op = DiffOp::term(
            &[Var::U, Var::V, Var::W],
            &u,
            &[Var::U],
            MultiPoly::var(&u, Var::U).unwrap(),
        )
        .unwrap();
        op.set_eps_valuation(-1);
        let cleared = op.clear().unwrap();
        assert_eq!(cleared.eps_valuation(), 0);
        assert_eq!(
            cleared.coefficient(&[1, 0, 0]).unwrap(),
            &MultiPoly::var(&u, Var::U).unwrap()
        );
    }

    #[test]
    fn clear_divides_content() {
        // (1/4) D_u + (1/2) u  ->  D_u + 2u
        let u = uni();
        let mut op = DiffOp::new(&[Var::U, Var::V, Var::W], &u).unwrap();
        op.add_term(&[1, 0, 0], MultiPoly::constant(&u, ratq(1, 4)));
        op.add_term(
            &[0, 0, 0],
            MultiPoly::var(&u, Var::U).unwrap().scale(&ratq(1, 2)),
        );
        let cleared = op.clear().unwrap();
        assert_eq!(cleared.coefficient(&[1, 0, 0]).unwrap(), &MultiPoly::one(&u));
        assert_eq!(
            cleared.coefficient(&[0, 0, 0]).unwrap(),
            &MultiPoly::var(&u, Var::U).unwrap().scale(&rat(2))
        );
    }

    #[test]
    fn compose_respects_leibniz() {
        // D_u . u = u D_u + 1
        let u = uni();
        let d = DiffOp::term(&[Var::U, Var::V, Var::W], &u, &[Var::U], MultiPoly::one(&u))
            .unwrap();
        let mul_u = DiffOp::term(
            &[Var::U, Var::V, Var::W],
            &u,
            &[],
            MultiPoly::var(&u, Var::U).unwrap(),
        )
        .unwrap();
        let prod = d.compose(&mul_u).unwrap();
        assert_eq!(prod.coefficient(&[0, 0, 0]).unwrap(), &MultiPoly::one(&u));
        assert_eq!(
            prod.coefficient(&[1, 0, 0]).unwrap(),
            &MultiPoly::var(&u, Var::U).unwrap()
        );
    }
}

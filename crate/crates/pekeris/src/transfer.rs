//! Transfer of the perimetric differential operator to a multivariate
//! recurrence on Laguerre expansion coefficients.
//!
//! With `F = sum A(l,m,n) L_l(u) L_m(v) L_n(w)`, the three classical
//! relations
//!
//! ```text
//! x L_k''(x) = (x - 1) L_k'(x) - k L_k(x)
//! x L_k(x)   = -(k+1) L_{k+1}(x) + (2k+1) L_k(x) - k L_{k-1}(x)
//! x L_k'(x)  = k L_k(x) - k L_{k-1}(x)
//! ```
//!
//! turn function-space building blocks into banded sequence operators on the
//! coefficient arrays: multiplication by `x` becomes `X`, the Euler operator
//! `theta = x d/dx` becomes `Theta`, and the Laguerre operator
//! `x d^2/dx^2 + (1-x) d/dx` becomes the diagonal `-k`. A monomial
//! `x^a D_x^2` with `a = 1` is rewritten through the last relation, which
//! leaves a bare `-D_x` behind; bare derivatives are not banded on the
//! Laguerre basis, so the transfer tracks all such remainders and verifies
//! that they cancel exactly across the whole operator before tensoring the
//! per-variable stencils together. The map is an algebra homomorphism:
//! composing operators composes stencils.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::diffop::DiffOp;
use crate::error::{Error, Result};
use crate::exact::{MultiPoly, Universe, Var};
use crate::pipeline::{euler_check, Interaction};

/// Index variables paired with the perimetric coordinates they count.
const INDEX_VARS: [Var; 3] = [Var::L, Var::M, Var::N];
const COORD_VARS: [Var; 3] = [Var::U, Var::V, Var::W];

/// Universe of stencil coefficients: `{l, m, n, Z, eps}`.
pub fn sequence_universe() -> Universe {
    Universe::new(&[Var::L, Var::M, Var::N, Var::Z, Var::Eps])
}

/// Exact value of the Laguerre polynomial `L_n` from its defining sum
/// `sum_k binom(n,k) (-x)^k / k!`.
pub fn laguerre_eval(n: u32, x: &BigRational) -> BigRational {
    let mut sum = BigRational::zero();
    let mut binom = BigInt::one();
    let mut factorial = BigInt::one();
    let mut power = BigRational::one();
    for k in 0..=n {
        if k > 0 {
            binom = binom * BigInt::from(n - k + 1) / BigInt::from(k);
            factorial *= BigInt::from(k);
            power *= -x;
        }
        sum += &power * BigRational::new(binom.clone(), factorial.clone());
    }
    sum
}

/// `L_n` as an exact polynomial in `var`.
pub fn laguerre_poly(n: u32, var: Var, universe: &Universe) -> Result<MultiPoly> {
    let mut sum = MultiPoly::zero(universe);
    let mut binom = BigInt::one();
    let mut factorial = BigInt::one();
    let mut sign = BigInt::one();
    for k in 0..=n {
        if k > 0 {
            binom = binom * BigInt::from(n - k + 1) / BigInt::from(k);
            factorial *= BigInt::from(k);
            sign = -sign;
        }
        let coeff = BigRational::new(&sign * &binom, factorial.clone());
        sum = sum.add(&MultiPoly::term(universe, &[(var, k)], coeff)?)?;
    }
    Ok(sum)
}

/// `L_n(x)` in floating point by the upward three-term recurrence.
pub fn laguerre_f64(n: u32, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = 1.0 - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// A finitely supported rational array over non-negative index triples.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoefArray {
    entries: BTreeMap<[u32; 3], BigRational>,
}

impl CoefArray {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn delta(triple: [u32; 3]) -> Self {
        let mut a = Self::new();
        a.set(triple, BigRational::one());
        a
    }

    pub fn set(&mut self, triple: [u32; 3], value: BigRational) {
        if value.is_zero() {
            self.entries.remove(&triple);
        } else {
            self.entries.insert(triple, value);
        }
    }

    pub fn get(&self, triple: [u32; 3]) -> BigRational {
        self.entries
            .get(&triple)
            .cloned()
            .unwrap_or_else(BigRational::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u32; 3], &BigRational)> {
        self.entries.iter()
    }

    pub fn support(&self) -> impl Iterator<Item = &[u32; 3]> {
        self.entries.keys()
    }
}

/// A banded sequence operator: a finite stencil of integer shifts, each with
/// a polynomial coefficient in `{l, m, n, Z, eps}`. Acting on an array,
/// `(S A)(t) = sum_s coeff_s(t) A(t + s)`, with `A` zero at negative indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeqOp {
    stencil: BTreeMap<[i64; 3], MultiPoly>,
}

impl SeqOp {
    pub fn zero() -> Self {
        SeqOp {
            stencil: BTreeMap::new(),
        }
    }

    pub fn num_terms(&self) -> usize {
        self.stencil.len()
    }

    pub fn shifts(&self) -> impl Iterator<Item = &[i64; 3]> {
        self.stencil.keys()
    }

    pub fn coefficient(&self, shift: [i64; 3]) -> Option<&MultiPoly> {
        self.stencil.get(&shift)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[i64; 3], &MultiPoly)> {
        self.stencil.iter()
    }

    fn add_term(&mut self, shift: [i64; 3], coeff: MultiPoly) {
        if coeff.is_zero() {
            return;
        }
        match self.stencil.entry(shift) {
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

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (s, c) in &other.stencil {
            out.add_term(*s, c.clone());
        }
        out
    }

    pub fn scale(&self, factor: &BigRational) -> Self {
        let mut out = SeqOp::zero();
        for (s, c) in &self.stencil {
            out.add_term(*s, c.scale(factor));
        }
        out
    }

    /// Stencil composition mirroring operator composition: apply `other`
    /// first, then `self`. Coefficients of `other` are re-evaluated at the
    /// shifted anchor.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        let uni = sequence_universe();
        let mut out = SeqOp::zero();
        for (s, p) in &self.stencil {
            for (t, q) in &other.stencil {
                let mut bind = BTreeMap::new();
                for (var, delta) in INDEX_VARS.iter().zip(s) {
                    let shifted = MultiPoly::var(&uni, *var)?
                        .add(&MultiPoly::from_integer(&uni, *delta))?;
                    bind.insert(*var, shifted);
                }
                let q_shifted = q.substitute(&bind, &uni)?;
                let shift = [s[0] + t[0], s[1] + t[1], s[2] + t[2]];
                out.add_term(shift, p.mul(&q_shifted)?);
            }
        }
        Ok(out)
    }

    /// Applies the stencil with `Z` and `eps` bound to exact rationals.
    pub fn apply(
        &self,
        array: &CoefArray,
        charge: &BigRational,
        eps: &BigRational,
    ) -> Result<CoefArray> {
        let mut anchors = std::collections::BTreeSet::new();
        for a in array.support() {
            for s in self.stencil.keys() {
                let t = [
                    i64::from(a[0]) - s[0],
                    i64::from(a[1]) - s[1],
                    i64::from(a[2]) - s[2],
                ];
                if t.iter().all(|&x| x >= 0) {
                    anchors.insert([t[0] as u32, t[1] as u32, t[2] as u32]);
                }
            }
        }
        let mut out = CoefArray::new();
        for t in anchors {
            let mut sum = BigRational::zero();
            for (s, coeff) in &self.stencil {
                let tgt = [
                    i64::from(t[0]) + s[0],
                    i64::from(t[1]) + s[1],
                    i64::from(t[2]) + s[2],
                ];
                if tgt.iter().any(|&x| x < 0) {
                    continue;
                }
                let value = array.get([tgt[0] as u32, tgt[1] as u32, tgt[2] as u32]);
                if value.is_zero() {
                    continue;
                }
                let mut point = BTreeMap::new();
                point.insert(Var::L, BigRational::from_integer(BigInt::from(t[0])));
                point.insert(Var::M, BigRational::from_integer(BigInt::from(t[1])));
                point.insert(Var::N, BigRational::from_integer(BigInt::from(t[2])));
                point.insert(Var::Z, charge.clone());
                point.insert(Var::Eps, eps.clone());
                sum += coeff.evaluate(&point)? * value;
            }
            out.set(t, sum);
        }
        Ok(out)
    }

    /// Applies the stencil keeping `Z` and `eps` symbolic; each output entry
    /// is a polynomial over the sequence universe involving only `Z`, `eps`.
    pub fn apply_symbolic(&self, array: &CoefArray) -> Result<BTreeMap<[u32; 3], MultiPoly>> {
        let uni = sequence_universe();
        let mut anchors = std::collections::BTreeSet::new();
        for a in array.support() {
            for s in self.stencil.keys() {
                let t = [
                    i64::from(a[0]) - s[0],
                    i64::from(a[1]) - s[1],
                    i64::from(a[2]) - s[2],
                ];
                if t.iter().all(|&x| x >= 0) {
                    anchors.insert([t[0] as u32, t[1] as u32, t[2] as u32]);
                }
            }
        }
        let mut out = BTreeMap::new();
        for t in anchors {
            let mut sum = MultiPoly::zero(&uni);
            for (s, coeff) in &self.stencil {
                let tgt = [
                    i64::from(t[0]) + s[0],
                    i64::from(t[1]) + s[1],
                    i64::from(t[2]) + s[2],
                ];
                if tgt.iter().any(|&x| x < 0) {
                    continue;
                }
                let value = array.get([tgt[0] as u32, tgt[1] as u32, tgt[2] as u32]);
                if value.is_zero() {
                    continue;
                }
                let mut bind = BTreeMap::new();
                for (var, anchor) in INDEX_VARS.iter().zip(&t) {
                    bind.insert(*var, MultiPoly::from_integer(&uni, i64::from(*anchor)));
                }
                let at_anchor = coeff.substitute(&bind, &uni)?;
                sum = sum.add(&at_anchor.scale(&value))?;
            }
            if !sum.is_zero() {
                out.insert(t, sum);
            }
        }
        Ok(out)
    }
}

/// One-dimensional banded operators over a single index variable.
fn op_identity(uni: &Universe) -> BTreeMap<i64, MultiPoly> {
    let mut s = BTreeMap::new();
    s.insert(0, MultiPoly::one(uni));
    s
}

/// Multiplication by the coordinate: `(X A)(k) = -k A(k-1) + (2k+1) A(k) - (k+1) A(k+1)`.
fn op_x(uni: &Universe, k: Var) -> BTreeMap<i64, MultiPoly> {
    let kp = MultiPoly::var(uni, k).unwrap();
    let one = MultiPoly::one(uni);
    let mut s = BTreeMap::new();
    s.insert(-1, kp.neg());
    s.insert(
        0,
        kp.scale(&BigRational::from_integer(BigInt::from(2)))
            .add(&one)
            .unwrap(),
    );
    s.insert(1, kp.add(&one).unwrap().neg());
    s
}

/// Euler operator `x d/dx`: `(Theta A)(k) = k A(k) - (k+1) A(k+1)`.
fn op_theta(uni: &Universe, k: Var) -> BTreeMap<i64, MultiPoly> {
    let kp = MultiPoly::var(uni, k).unwrap();
    let one = MultiPoly::one(uni);
    let mut s = BTreeMap::new();
    s.insert(0, kp.clone());
    s.insert(1, kp.add(&one).unwrap().neg());
    s
}

/// Laguerre operator `x d^2/dx^2 + (1-x) d/dx`: diagonal `-k`.
fn op_laguerre(uni: &Universe, k: Var) -> BTreeMap<i64, MultiPoly> {
    let mut s = BTreeMap::new();
    s.insert(0, MultiPoly::var(uni, k).unwrap().neg());
    s
}

fn compose_1d(
    uni: &Universe,
    k: Var,
    p: &BTreeMap<i64, MultiPoly>,
    q: &BTreeMap<i64, MultiPoly>,
) -> Result<BTreeMap<i64, MultiPoly>> {
    let mut out: BTreeMap<i64, MultiPoly> = BTreeMap::new();
    for (s, pc) in p {
        let mut bind = BTreeMap::new();
        bind.insert(
            k,
            MultiPoly::var(uni, k)?.add(&MultiPoly::from_integer(uni, *s))?,
        );
        for (t, qc) in q {
            let qc_shifted = qc.substitute(&bind, uni)?;
            let term = pc.mul(&qc_shifted)?;
            if term.is_zero() {
                continue;
            }
            match out.entry(s + t) {
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(term);
                }
                std::collections::btree_map::Entry::Occupied(mut e) => {
                    let sum = e.get().add(&term)?;
                    if sum.is_zero() {
                        e.remove();
                    } else {
                        *e.get_mut() = sum;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Bare-derivative remainder produced while rewriting one monomial.
#[derive(Debug, Clone, Copy)]
struct Defect {
    order: u8,
    sign: i8,
}

/// Rewrites `x^a D_x^i` over one variable. Returns the banded stencil part
/// and, when the Euler rewriting does not close, the bare-derivative defect.
fn transfer_1d(
    uni: &Universe,
    k: Var,
    a: u32,
    i: u8,
) -> Result<(BTreeMap<i64, MultiPoly>, Option<Defect>)> {
    let x = op_x(uni, k);
    match i {
        0 => {
            let mut acc = op_identity(uni);
            for _ in 0..a {
                acc = compose_1d(uni, k, &acc, &x)?;
            }
            Ok((acc, None))
        }
        1 => {
            if a == 0 {
                return Ok((BTreeMap::new(), Some(Defect { order: 1, sign: 1 })));
            }
            let mut acc = op_identity(uni);
            for _ in 0..(a - 1) {
                acc = compose_1d(uni, k, &acc, &x)?;
            }
            Ok((compose_1d(uni, k, &acc, &op_theta(uni, k))?, None))
        }
        2 => match a {
            0 => Ok((BTreeMap::new(), Some(Defect { order: 2, sign: 1 }))),
            1 => {
                // x D^2 = (Laguerre operator) + theta - D
                let mut banded = op_laguerre(uni, k);
                for (s, c) in op_theta(uni, k) {
                    match banded.entry(s) {
                        std::collections::btree_map::Entry::Vacant(e) => {
                            e.insert(c);
                        }
                        std::collections::btree_map::Entry::Occupied(mut e) => {
                            let sum = e.get().add(&c)?;
                            if sum.is_zero() {
                                e.remove();
                            } else {
                                *e.get_mut() = sum;
                            }
                        }
                    }
                }
                Ok((banded, Some(Defect { order: 1, sign: -1 })))
            }
            _ => {
                // x^a D^2 = x^{a-2} * theta (theta - 1)
                let theta = op_theta(uni, k);
                let mut theta2 = compose_1d(uni, k, &theta, &theta)?;
                for (s, c) in &theta {
                    let neg = c.neg();
                    match theta2.entry(*s) {
                        std::collections::btree_map::Entry::Vacant(e) => {
                            e.insert(neg);
                        }
                        std::collections::btree_map::Entry::Occupied(mut e) => {
                            let sum = e.get().add(&neg)?;
                            if sum.is_zero() {
                                e.remove();
                            } else {
                                *e.get_mut() = sum;
                            }
                        }
                    }
                }
                let mut acc = op_identity(uni);
                for _ in 0..(a - 2) {
                    acc = compose_1d(uni, k, &acc, &x)?;
                }
                Ok((compose_1d(uni, k, &acc, &theta2)?, None))
            }
        },
        _ => Err(Error::DerivativeOrderExceeded {
            order: u32::from(i),
        }),
    }
}

/// Converts a differential operator in `(u, v, w)` into a banded sequence
/// operator on Laguerre coefficients.
///
/// Fails if a second derivative appears without a factor of its variable, or
/// if the bare-derivative remainders left by the differential-equation
/// relation do not cancel exactly across the operator.
pub fn phi_transfer(op: &DiffOp) -> Result<SeqOp> {
    assert_eq!(op.diff_vars(), COORD_VARS, "operator must act on (u, v, w)");
    let report = euler_check(op);
    if !report.ok() {
        return Err(Error::EulerViolation(report.to_string()));
    }
    if op.eps_valuation() < 0 {
        return Err(Error::NegativeEpsValuation(op.eps_valuation()));
    }

    let uni = sequence_universe();
    let coeff_uni = op.universe();
    let coord_idx: Vec<usize> = COORD_VARS
        .iter()
        .map(|&v| coeff_uni.index_of(v).expect("coordinate in universe"))
        .collect();

    // Residual bookkeeping: (variable slot, defect order, derivative index of
    // the other variables, source monomial with the defect variable removed)
    // -> accumulated rational coefficient.
    type DefectKey = (usize, u8, Vec<u8>, Vec<u32>);
    let mut defects: BTreeMap<DefectKey, BigRational> = BTreeMap::new();
    let mut stencil = SeqOp::zero();

    for (index, coeff) in op.iter_terms() {
        for (mono, c) in coeff.iter_terms() {
            let exps = mono.exponents();
            let mut parts: Vec<BTreeMap<i64, MultiPoly>> = Vec::with_capacity(3);
            let mut part_defects: Vec<Option<Defect>> = Vec::with_capacity(3);
            for slot in 0..3 {
                let (banded, defect) = transfer_1d(
                    &uni,
                    INDEX_VARS[slot],
                    exps[coord_idx[slot]],
                    index[slot],
                )?;
                parts.push(banded);
                part_defects.push(defect);
            }

            for (slot, defect) in part_defects.iter().enumerate() {
                if let Some(d) = defect {
                    let mut others_deriv = index.clone();
                    others_deriv[slot] = 0;
                    let mut residual_mono = exps.to_vec();
                    residual_mono[coord_idx[slot]] = 0;
                    let key = (slot, d.order, others_deriv, residual_mono);
                    let entry = defects.entry(key).or_insert_with(BigRational::zero);
                    *entry += c * BigRational::from_integer(BigInt::from(d.sign));
                }
            }

            // The monomial's parameter factor (anything that is not u, v, w).
            let mut param = MultiPoly::constant(&uni, c.clone());
            for (k, &e) in exps.iter().enumerate() {
                if e == 0 || coord_idx.contains(&k) {
                    continue;
                }
                param = param.mul_var_pow(coeff_uni.vars()[k], e)?;
            }

            for (s1, c1) in &parts[0] {
                for (s2, c2) in &parts[1] {
                    for (s3, c3) in &parts[2] {
                        let product = param.mul(c1)?.mul(c2)?.mul(c3)?;
                        stencil.add_term([*s1, *s2, *s3], product);
                    }
                }
            }
        }
    }

    defects.retain(|_, c| !c.is_zero());
    if !defects.is_empty() {
        let mut msg = String::new();
        for ((slot, order, derivs, mono), c) in &defects {
            msg.push_str(&format!(
                "  D[{}]^{order} with residual exponents {mono:?}, other derivatives {derivs:?}: {c}\n",
                COORD_VARS[*slot],
            ));
        }
        return Err(Error::ResidualDefects(msg));
    }

    if op.eps_valuation() > 0 {
        let mut lifted = SeqOp::zero();
        for (s, c) in stencil.iter() {
            lifted.add_term(*s, c.mul_var_pow(Var::Eps, op.eps_valuation() as u32)?);
        }
        stencil = lifted;
    }
    Ok(stencil)
}

/// The normalized recurrence: integer stencil coefficients with global
/// content one, the sign fixed so the lexicographically smallest shift has a
/// positive leading coefficient, and validated degree bounds. By convention
/// `A(l,m,n) = 0` whenever any index is negative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recurrence {
    seq: SeqOp,
    interaction: Interaction,
}

pub const PEKERIS_TERM_COUNT: usize = 33;
pub const PEKERIS_INDEX_DEGREE: u32 = 3;

impl Recurrence {
    /// Normalizes and validates a transferred stencil. The shape assertions
    /// (exactly 33 terms, cubic index degree attained) apply to the
    /// interacting operator only; degree-one bounds in `Z` and `eps` apply
    /// always.
    pub fn from_seq_op(seq: SeqOp, interaction: Interaction) -> Result<Self> {
        // Global content and sign normalization.
        let mut num_gcd = BigInt::zero();
        let mut den_lcm = BigInt::one();
        for (_, coeff) in seq.iter() {
            for (_, c) in coeff.iter_terms() {
                num_gcd = num_integer::Integer::gcd(&num_gcd, c.numer());
                den_lcm = num_integer::Integer::lcm(&den_lcm, c.denom());
            }
        }
        let mut content = BigRational::new(num_gcd, den_lcm);
        if let Some((_, first)) = seq.iter().next() {
            if first
                .leading_coefficient()
                .map(Signed::is_negative)
                .unwrap_or(false)
            {
                content = -content;
            }
        }
        let normalized = seq.scale(&content.recip());

        let mut max_index_degree = 0;
        let mut deg_z = 0;
        let mut deg_eps = 0;
        for (_, coeff) in normalized.iter() {
            deg_z = deg_z.max(coeff.degree_in(Var::Z));
            deg_eps = deg_eps.max(coeff.degree_in(Var::Eps));
            for (mono, _) in coeff.iter_terms() {
                let exps = mono.exponents();
                // l, m, n are the first three variables of the universe.
                max_index_degree = max_index_degree.max(exps[0] + exps[1] + exps[2]);
            }
        }

        let shape_ok = deg_z <= 1
            && deg_eps <= 1
            && match interaction {
                Interaction::On => {
                    normalized.num_terms() == PEKERIS_TERM_COUNT
                        && max_index_degree == PEKERIS_INDEX_DEGREE
                }
                Interaction::Off => max_index_degree <= PEKERIS_INDEX_DEGREE,
            };
        if !shape_ok {
            return Err(Error::DerivationMismatch {
                terms: normalized.num_terms(),
                expected_terms: PEKERIS_TERM_COUNT,
                degree: max_index_degree,
                expected_degree: PEKERIS_INDEX_DEGREE,
                deg_z,
                deg_eps,
            });
        }
        Ok(Recurrence {
            seq: normalized,
            interaction,
        })
    }

    pub fn seq_op(&self) -> &SeqOp {
        &self.seq
    }

    pub fn interaction(&self) -> Interaction {
        self.interaction
    }

    pub fn num_terms(&self) -> usize {
        self.seq.num_terms()
    }

    pub fn max_index_degree(&self) -> u32 {
        self.seq
            .iter()
            .flat_map(|(_, c)| c.iter_terms())
            .map(|(mono, _)| {
                let e = mono.exponents();
                e[0] + e[1] + e[2]
            })
            .max()
            .unwrap_or(0)
    }

    pub fn to_json(&self) -> RecurrenceJson {
        let stencil = self
            .seq
            .iter()
            .map(|(shift, coeff)| {
                let mut terms: Vec<RecurrenceTermJson> = coeff
                    .iter_terms()
                    .map(|(mono, c)| RecurrenceTermJson {
                        exponents: mono.exponents().to_vec(),
                        coefficient: c.numer().to_string(),
                    })
                    .collect();
                terms.reverse(); // leading (graded-lex largest) first
                RecurrenceStencilJson {
                    shift: *shift,
                    terms,
                }
            })
            .collect();
        RecurrenceJson {
            variables: sequence_universe()
                .vars()
                .iter()
                .map(|v| v.name().to_string())
                .collect(),
            interaction: self.interaction.label().to_string(),
            term_count: self.num_terms(),
            max_index_degree: self.max_index_degree(),
            stencil,
        }
    }

    pub fn from_json(json: &RecurrenceJson) -> Result<Self> {
        let uni = sequence_universe();
        let expected: Vec<String> = uni.vars().iter().map(|v| v.name().to_string()).collect();
        if json.variables != expected {
            return Err(Error::Parse {
                what: "recurrence".into(),
                detail: format!("unexpected variable order {:?}", json.variables),
            });
        }
        let interaction = match json.interaction.as_str() {
            "on" => Interaction::On,
            "off" => Interaction::Off,
            other => {
                return Err(Error::Parse {
                    what: "recurrence".into(),
                    detail: format!("unknown interaction flag {other:?}"),
                })
            }
        };
        let mut seq = SeqOp::zero();
        for entry in &json.stencil {
            let mut coeff = MultiPoly::zero(&uni);
            for term in &entry.terms {
                if term.exponents.len() != uni.len() {
                    return Err(Error::Parse {
                        what: "recurrence".into(),
                        detail: "exponent arity mismatch".into(),
                    });
                }
                let int: BigInt = term.coefficient.parse().map_err(|_| Error::Parse {
                    what: "recurrence".into(),
                    detail: format!("bad integer {:?}", term.coefficient),
                })?;
                let powers: Vec<(Var, u32)> = uni
                    .vars()
                    .iter()
                    .zip(&term.exponents)
                    .map(|(&v, &e)| (v, e))
                    .collect();
                coeff = coeff.add(&MultiPoly::term(
                    &uni,
                    &powers,
                    BigRational::from_integer(int),
                )?)?;
            }
            seq.add_term(entry.shift, coeff);
        }
        Recurrence::from_seq_op(seq, interaction)
    }
}

impl fmt::Display for Recurrence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}-term recurrence (interaction {}), coefficients in (l, m, n, Z, eps):",
            self.num_terms(),
            self.interaction
        )?;
        for (shift, coeff) in self.seq.iter() {
            writeln!(
                f,
                "  A(l{:+}, m{:+}, n{:+}): {}",
                shift[0], shift[1], shift[2], coeff
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecurrenceJson {
    pub variables: Vec<String>,
    pub interaction: String,
    pub term_count: usize,
    pub max_index_degree: u32,
    pub stencil: Vec<RecurrenceStencilJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecurrenceStencilJson {
    pub shift: [i64; 3],
    pub terms: Vec<RecurrenceTermJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecurrenceTermJson {
    pub exponents: Vec<u32>,
    pub coefficient: String,
}

/// Derives the recurrence for the given interaction setting from scratch:
/// perimetric operator, transfer, normalization, validation.
pub fn derive_recurrence(interaction: Interaction) -> Result<Recurrence> {
    let op = crate::pipeline::perimetric_operator(crate::pipeline::PipelineConfig::new(
        interaction,
    ))?;
    let seq = phi_transfer(&op)?;
    Recurrence::from_seq_op(seq, interaction)
}

/// The validated 33-term recurrence of the interacting problem.
pub fn pekeris_recurrence(op: &DiffOp) -> Result<Recurrence> {
    let seq = phi_transfer(op)?;
    Recurrence::from_seq_op(seq, Interaction::On)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{perimetric_operator, PipelineConfig};

    fn rat(n: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    fn ratq(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn laguerre_small_values() {
        assert_eq!(laguerre_eval(0, &rat(7)), rat(1));
        assert_eq!(laguerre_eval(1, &rat(3)), rat(-2)); // 1 - 3
        assert_eq!(laguerre_eval(2, &rat(2)), rat(-1)); // 1 - 4 + 2
        assert_eq!(laguerre_eval(3, &rat(1)), ratq(-2, 3));
    }

    #[test]
    fn laguerre_poly_matches_eval() {
        let uni = Universe::new(&[Var::U]);
        for n in 0..6u32 {
            let p = laguerre_poly(n, Var::U, &uni).unwrap();
            for x in [-2i64, 0, 1, 5] {
                let mut pt = BTreeMap::new();
                pt.insert(Var::U, rat(x));
                assert_eq!(p.evaluate(&pt).unwrap(), laguerre_eval(n, &rat(x)));
            }
        }
    }

    #[test]
    fn laguerre_f64_matches_exact() {
        for n in [0u32, 1, 4, 9] {
            for x in [0.0f64, 0.5, 3.25] {
                let exact = laguerre_eval(
                    n,
                    &BigRational::new(BigInt::from((x * 4.0) as i64), BigInt::from(4)),
                );
                let approx = laguerre_f64(n, x);
                let exact_f = exact.numer().to_string().parse::<f64>().unwrap()
                    / exact.denom().to_string().parse::<f64>().unwrap();
                assert!((approx - exact_f).abs() < 1e-10 * (1.0 + exact_f.abs()));
            }
        }
    }

    fn mul_by_u() -> DiffOp {
        let uni = crate::pipeline::perimetric_universe();
        DiffOp::term(
            &COORD_VARS,
            &uni,
            &[],
            MultiPoly::var(&uni, Var::U).unwrap(),
        )
        .unwrap()
    }

    fn theta_u() -> DiffOp {
        let uni = crate::pipeline::perimetric_universe();
        DiffOp::term(
            &COORD_VARS,
            &uni,
            &[Var::U],
            MultiPoly::var(&uni, Var::U).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn multiplication_stencil_on_delta() {
        // u * L_0 = L_0 - L_1
        let seq = phi_transfer(&mul_by_u()).unwrap();
        let result = seq
            .apply(&CoefArray::delta([0, 0, 0]), &rat(1), &rat(1))
            .unwrap();
        assert_eq!(result.get([0, 0, 0]), rat(1));
        assert_eq!(result.get([1, 0, 0]), rat(-1));
        assert_eq!(result.iter().count(), 2);
    }

    #[test]
    fn euler_stencil_on_delta() {
        // u L_1' = L_1 - L_0
        let seq = phi_transfer(&theta_u()).unwrap();
        let result = seq
            .apply(&CoefArray::delta([1, 0, 0]), &rat(1), &rat(1))
            .unwrap();
        assert_eq!(result.get([0, 0, 0]), rat(-1));
        assert_eq!(result.get([1, 0, 0]), rat(1));
    }

    #[test]
    fn commutator_theta_u_equals_u() {
        // [theta_u, u] = u as operators, so the stencils must agree.
        let t = theta_u();
        let x = mul_by_u();
        let commutator = t.compose(&x).unwrap().sub(&x.compose(&t).unwrap()).unwrap();
        assert_eq!(
            phi_transfer(&commutator).unwrap(),
            phi_transfer(&x).unwrap()
        );
    }

    #[test]
    fn transfer_is_homomorphism_on_samples() {
        // Phi(P . Q) = Phi(P) . Phi(Q) for generators x and theta.
        let cases = [
            (mul_by_u(), theta_u()),
            (theta_u(), mul_by_u()),
            (mul_by_u(), mul_by_u()),
        ];
        for (p, q) in cases {
            let lhs = phi_transfer(&p.compose(&q).unwrap()).unwrap();
            let rhs = phi_transfer(&p)
                .unwrap()
                .compose(&phi_transfer(&q).unwrap())
                .unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn bare_derivative_defect_is_detected() {
        let uni = crate::pipeline::perimetric_universe();
        let op = DiffOp::term(&COORD_VARS, &uni, &[Var::U], MultiPoly::one(&uni)).unwrap();
        assert!(matches!(
            phi_transfer(&op),
            Err(Error::ResidualDefects(_))
        ));
    }

    #[test]
    fn pekeris_recurrence_has_expected_shape() {
        let op = perimetric_operator(PipelineConfig::new(Interaction::On)).unwrap();
        let rec = pekeris_recurrence(&op).unwrap();
        assert_eq!(rec.num_terms(), PEKERIS_TERM_COUNT);
        assert_eq!(rec.max_index_degree(), PEKERIS_INDEX_DEGREE);
        for (_, coeff) in rec.seq_op().iter() {
            assert!(coeff.degree_in(Var::Z) <= 1);
            assert!(coeff.degree_in(Var::Eps) <= 1);
            assert!(coeff.has_integer_coefficients());
        }
    }

    #[test]
    fn interaction_free_recurrence_kills_delta_at_eps_z() {
        // With the repulsion off, A = delta_{(0,0,0)} at eps = Z solves the
        // recurrence at every anchor.
        let rec = derive_recurrence(Interaction::Off).unwrap();
        let uni = sequence_universe();
        let image = rec
            .seq_op()
            .apply_symbolic(&CoefArray::delta([0, 0, 0]))
            .unwrap();
        let mut bind = BTreeMap::new();
        bind.insert(Var::Eps, MultiPoly::var(&uni, Var::Z).unwrap());
        for (anchor, poly) in image {
            let at_z = poly.substitute(&bind, &uni).unwrap();
            assert!(at_z.is_zero(), "anchor {anchor:?}: {at_z}");
        }
    }

    #[test]
    fn recurrence_json_round_trip() {
        let rec = derive_recurrence(Interaction::On).unwrap();
        let json = rec.to_json();
        assert_eq!(json.term_count, PEKERIS_TERM_COUNT);
        let back = Recurrence::from_json(&json).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn apply_to_zero_array_is_zero() {
        let rec = derive_recurrence(Interaction::On).unwrap();
        let out = rec
            .seq_op()
            .apply(&CoefArray::new(), &rat(2), &ratq(17, 10))
            .unwrap();
        assert!(out.is_zero());
    }

    #[test]
    fn reconstruction_identity_on_one_array() {
        // Resumming the stencil image reproduces the direct operator
        // application, exactly, in the polynomial ring.
        let op = perimetric_operator(PipelineConfig::new(Interaction::On)).unwrap();
        let seq = phi_transfer(&op).unwrap();
        let mut array = CoefArray::new();
        array.set([0, 0, 0], rat(3));
        array.set([1, 0, 2], ratq(-5, 2));
        array.set([0, 2, 1], rat(1));

        let big = Universe::new(&[Var::U, Var::V, Var::W, Var::Z, Var::Eps]);
        let resum = |coeffs: &BTreeMap<[u32; 3], MultiPoly>| -> MultiPoly {
            let mut acc = MultiPoly::zero(&big);
            for (t, c) in coeffs {
                let basis = laguerre_poly(t[0], Var::U, &big)
                    .unwrap()
                    .mul(&laguerre_poly(t[1], Var::V, &big).unwrap())
                    .unwrap()
                    .mul(&laguerre_poly(t[2], Var::W, &big).unwrap())
                    .unwrap();
                acc = acc.add(&c.embed(&big).unwrap().mul(&basis).unwrap()).unwrap();
            }
            acc
        };

        let image = seq.apply_symbolic(&array).unwrap();
        let lhs = resum(&image);

        let f = {
            let mut coeffs = BTreeMap::new();
            for (t, c) in array.iter() {
                coeffs.insert(*t, MultiPoly::constant(&big, c.clone()));
            }
            resum(&coeffs)
        };
        let rhs = op.apply_to_poly(&f).unwrap();
        assert_eq!(lhs, rhs);
    }
}

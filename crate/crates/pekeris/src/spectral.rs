//! Numeric solution of the pencil: locate the largest real `eps` with
//! `det(A - eps B) = 0`, refine it, recover the null direction, and evaluate
//! energies and wave functions.
//!
//! Determinants are evaluated as `(sign, log|det|)` through an LU
//! factorization with partial pivoting, so the astronomically large integer
//! determinants of these pencils never overflow. The largest root is
//! bracketed by a downward sign scan from `eps = Z + 1` (the ground-state
//! eigenvalue satisfies `eps < Z` physically, since the electron repulsion
//! only raises the energy above `-Z^2`), then refined by bisection and a
//! short secant polish.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::assembly::{enumerate_basis, SparsePencil, SymClass};
use crate::error::{Error, Result};
use crate::transfer::laguerre_f64;

/// Converged eigenpair of one truncated pencil.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub charge: u32,
    pub omega: u32,
    pub sym: SymClass,
    /// Largest real generalized eigenvalue.
    pub epsilon: f64,
    /// Ground-state energy `-epsilon^2` in atomic units.
    pub energy: f64,
    /// Unit eigenvector over the basis triples, first nonzero entry positive.
    pub vector: Vec<f64>,
    /// `||(A - epsilon B) v||_2` for the unit vector `v`.
    pub residual_norm: f64,
    pub dim: usize,
    pub iterations: usize,
    pub det_evaluations: usize,
    pub warnings: Vec<DipWarning>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenResultJson {
    pub charge: u32,
    pub omega: u32,
    pub symmetry: String,
    pub dim: usize,
    pub epsilon: f64,
    pub energy: f64,
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
}

impl EigenResult {
    pub fn to_json(&self, include_vector: bool) -> EigenResultJson {
        EigenResultJson {
            charge: self.charge,
            omega: self.omega,
            symmetry: self.sym.label().into(),
            dim: self.dim,
            epsilon: self.epsilon,
            energy: self.energy,
            residual: self.residual_norm,
            vector: include_vector.then(|| self.vector.clone()),
        }
    }
}

/// A local minimum of `log|det|` without a sign change seen during the scan;
/// possible even-multiplicity root, reported rather than returned.
#[derive(Debug, Clone, Serialize)]
pub struct DipWarning {
    pub eps: f64,
    pub log_abs_det: f64,
}

/// Options for the root scan; the defaults follow the physical bound.
#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    /// Upper end of the scan; defaults to `Z + 1`.
    pub eps_hi: Option<f64>,
    /// Scan step; defaults to `0.01 * Z`.
    pub scan_step: Option<f64>,
    /// Absolute width tolerance on `eps`.
    pub tol: f64,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            eps_hi: None,
            scan_step: None,
            tol: 1e-12,
        }
    }
}

fn dense_at(pencil: &SparsePencil, eps: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(pencil.dim, pencil.dim);
    for &(r, c, a, b) in &pencil.entries {
        m[(r as usize, c as usize)] = a as f64 - eps * b as f64;
    }
    m
}

fn dense_b(pencil: &SparsePencil) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(pencil.dim, pencil.dim);
    for &(r, c, _, b) in &pencil.entries {
        m[(r as usize, c as usize)] = b as f64;
    }
    m
}

fn matvec_a(pencil: &SparsePencil, x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(pencil.dim);
    for &(r, c, a, _) in &pencil.entries {
        y[r as usize] += a as f64 * x[c as usize];
    }
    y
}

fn matvec_b(pencil: &SparsePencil, x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(pencil.dim);
    for &(r, c, _, b) in &pencil.entries {
        y[r as usize] += b as f64 * x[c as usize];
    }
    y
}

/// `(sign, log|det|)` of `A - eps B` by LU with partial pivoting. The sign
/// is zero exactly when a pivot vanishes.
pub fn log_det_sign(pencil: &SparsePencil, eps: f64) -> Result<(i8, f64)> {
    if pencil.dim == 0 {
        return Err(Error::EmptyPencil);
    }
    let lu = dense_at(pencil, eps).lu();
    let mut sign = 1i8;
    let perm_det: f64 = lu.p().determinant();
    if perm_det < 0.0 {
        sign = -sign;
    }
    let mut log_abs = 0.0f64;
    for i in 0..pencil.dim {
        let pivot = lu.u()[(i, i)];
        if pivot == 0.0 {
            return Ok((0, f64::NEG_INFINITY));
        }
        if pivot < 0.0 {
            sign = -sign;
        }
        log_abs += pivot.abs().ln();
    }
    Ok((sign, log_abs))
}

/// Outcome of the scan-and-refine search for the largest root.
#[derive(Debug, Clone)]
pub struct RootResult {
    pub eps: f64,
    pub bracket: (f64, f64),
    pub det_evaluations: usize,
    pub warnings: Vec<DipWarning>,
}

/// Scans downward from `eps_hi` until the determinant sign changes, then
/// refines by bisection to the requested width and polishes with a few
/// secant steps on the signed, shifted determinant.
pub fn find_largest_root(pencil: &SparsePencil, opts: &RootOptions) -> Result<RootResult> {
    let z = f64::from(pencil.charge);
    let hi = opts.eps_hi.unwrap_or(z + 1.0);
    let step = opts.scan_step.unwrap_or(0.01 * z).max(1e-6);
    let tol = opts.tol;

    let mut evals = 0usize;
    let mut eval = |eps: f64| -> Result<(i8, f64)> {
        evals += 1;
        log_det_sign(pencil, eps)
    };

    // Downward scan.
    let mut scan: Vec<(f64, i8, f64)> = Vec::new();
    let (s0, l0) = eval(hi)?;
    scan.push((hi, s0, l0));
    let mut bracket: Option<(f64, f64)> = None;
    let mut k = 1u32;
    loop {
        let eps = hi - f64::from(k) * step;
        if eps <= 0.0 {
            break;
        }
        let (s, l) = eval(eps)?;
        let (prev_eps, prev_s, _) = *scan.last().unwrap();
        scan.push((eps, s, l));
        if s == 0 {
            bracket = Some((eps, eps));
            break;
        }
        if prev_s != 0 && s != prev_s {
            bracket = Some((eps, prev_eps));
            break;
        }
        k += 1;
    }

    // Same-sign local minima of log|det| seen before the bracket.
    let mut warnings = Vec::new();
    for i in 1..scan.len().saturating_sub(1) {
        let (_, s_prev, l_prev) = scan[i - 1];
        let (eps, s, l) = scan[i];
        let (_, s_next, l_next) = scan[i + 1];
        if s == s_prev && s == s_next && l < l_prev && l < l_next {
            warnings.push(DipWarning {
                eps,
                log_abs_det: l,
            });
        }
    }

    let Some((mut lo, mut hi_b)) = bracket else {
        let trace = scan
            .iter()
            .map(|(e, s, l)| format!("  eps={e:.6}  sign={s:+}  log|det|={l:.3}"))
            .collect::<Vec<_>>()
            .join("\n");
        return Err(Error::NoRootFound { hi, trace });
    };

    if lo < hi_b {
        let (mut s_lo, mut l_lo) = eval(lo)?;
        let (mut s_hi, mut l_hi) = eval(hi_b)?;
        debug_assert!(s_lo != s_hi, "bracket endpoints must differ in sign");
        // Bisection.
        let mut iterations = 0;
        while hi_b - lo > tol * lo.abs().max(1.0) && iterations < 200 {
            let mid = 0.5 * (lo + hi_b);
            if mid <= lo || mid >= hi_b {
                break; // interval at floating-point resolution
            }
            let (s_mid, l_mid) = eval(mid)?;
            if s_mid == 0 {
                lo = mid;
                hi_b = mid;
                break;
            }
            if s_mid == s_lo {
                lo = mid;
                s_lo = s_mid;
                l_lo = l_mid;
            } else {
                hi_b = mid;
                s_hi = s_mid;
                l_hi = l_mid;
            }
            iterations += 1;
        }
        // Secant polish on sign * exp(log|det| - shift).
        if lo < hi_b {
            let shift = l_lo.max(l_hi);
            let mut x0 = lo;
            let mut f0 = f64::from(s_lo) * (l_lo - shift).exp();
            let mut x1 = hi_b;
            let mut f1 = f64::from(s_hi) * (l_hi - shift).exp();
            for _ in 0..4 {
                if (f1 - f0).abs() < f64::MIN_POSITIVE || x0 == x1 {
                    break;
                }
                let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
                if !(lo..=hi_b).contains(&x2) {
                    break;
                }
                let (s2, l2) = eval(x2)?;
                let f2 = f64::from(s2) * (l2 - shift).exp();
                x0 = x1;
                f0 = f1;
                x1 = x2;
                f1 = f2;
                if s2 == 0 {
                    break;
                }
            }
            let refined = if f1.abs() <= f0.abs() { x1 } else { x0 };
            return Ok(RootResult {
                eps: refined,
                bracket: (lo, hi_b),
                det_evaluations: evals,
                warnings,
            });
        }
    }

    Ok(RootResult {
        eps: lo,
        bracket: (lo, hi_b),
        det_evaluations: evals,
        warnings,
    })
}

/// Inverse iteration on the shifted pencil: repeatedly solves
/// `(A - sigma B) x' = B x` with `sigma` slightly offset from the root and
/// normalizes, converging to the null direction of `A - eps B`.
pub fn inverse_iteration(
    pencil: &SparsePencil,
    eps_star: f64,
    max_iter: usize,
    tol: f64,
) -> Result<(Vec<f64>, f64, usize)> {
    if pencil.dim == 0 {
        return Err(Error::EmptyPencil);
    }
    let n = pencil.dim;
    let mut offset = (eps_star.abs() * 1e-10).max(1e-12);
    let mut lu = None;
    for _ in 0..6 {
        let candidate = dense_at(pencil, eps_star + offset).lu();
        if candidate.is_invertible() {
            lu = Some(candidate);
            break;
        }
        offset *= 10.0;
    }
    let lu = lu.ok_or(Error::IterationDiverged {
        iterations: 0,
        residual: f64::INFINITY,
    })?;

    let mut x = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut best_residual = f64::INFINITY;
    let mut iterations = 0;
    for iter in 1..=max_iter {
        iterations = iter;
        let rhs = matvec_b(pencil, &x);
        let Some(mut next) = lu.solve(&rhs) else {
            return Err(Error::IterationDiverged {
                iterations: iter,
                residual: best_residual,
            });
        };
        let norm = next.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::IterationDiverged {
                iterations: iter,
                residual: best_residual,
            });
        }
        next /= norm;
        let residual = (matvec_a(pencil, &next) - eps_star * matvec_b(pencil, &next)).norm();
        x = next;
        if residual < best_residual {
            best_residual = residual;
        }
        if residual <= tol {
            break;
        }
    }
    if best_residual > tol {
        return Err(Error::IterationDiverged {
            iterations,
            residual: best_residual,
        });
    }
    // Sign convention: first entry that is clearly nonzero is positive.
    let scale = x.amax();
    if let Some(first) = x.iter().find(|v| v.abs() > 1e-12 * scale) {
        if *first < 0.0 {
            x = -x;
        }
    }
    Ok((x.data.into(), best_residual, iterations))
}

/// Full solve for one configuration: assemble is done by the caller (the
/// recurrence is reusable), this runs scan, refinement and eigenvector
/// recovery, and packages the result.
pub fn solve_pencil(
    pencil: &SparsePencil,
    opts: &RootOptions,
    residual_tol: f64,
) -> Result<EigenResult> {
    let root = find_largest_root(pencil, opts)?;
    let (vector, residual_norm, iterations) =
        inverse_iteration(pencil, root.eps, 50, residual_tol)?;
    Ok(EigenResult {
        charge: pencil.charge,
        omega: pencil.omega,
        sym: pencil.sym,
        epsilon: root.eps,
        energy: -root.eps * root.eps,
        vector,
        residual_norm,
        dim: pencil.dim,
        iterations,
        det_evaluations: root.det_evaluations,
        warnings: root.warnings,
    })
}

/// Rayleigh-style estimate `(v^T A v)/(v^T B v)` for a converged vector.
pub fn rayleigh_quotient(pencil: &SparsePencil, vector: &[f64]) -> f64 {
    let x = DVector::from_column_slice(vector);
    let num = x.dot(&matvec_a(pencil, &x));
    let den = x.dot(&matvec_b(pencil, &x));
    num / den
}

/// Evaluates `psi(r1, r2, r12) = exp(-(u+v+w)/2) * sum A(l,m,n) L_l(u)
/// L_m(v) L_n(w)` at the converged `eps`, unfolding the fundamental-domain
/// vector with the symmetry sign.
pub fn evaluate_wavefunction(result: &EigenResult, r1: f64, r2: f64, r12: f64) -> Result<f64> {
    let eps = result.epsilon;
    let admissible = r1 > 0.0
        && r2 > 0.0
        && r12 > 0.0
        && r1 + r2 >= r12
        && r1 + r12 >= r2
        && r2 + r12 >= r1;
    if !admissible {
        return Err(Error::TriangleViolation { r1, r2, r12 });
    }
    let u = eps * (r2 + r12 - r1);
    let v = eps * (r1 + r12 - r2);
    let w = 2.0 * eps * (r1 + r2 - r12);

    let omega = result.omega;
    let lag = |x: f64| -> Vec<f64> { (0..=omega).map(|k| laguerre_f64(k, x)).collect() };
    let lu = lag(u);
    let lv = lag(v);
    let lw = lag(w);

    let basis = enumerate_basis(omega, result.sym);
    let swap_sign = match result.sym {
        SymClass::Para => 1.0,
        SymClass::Ortho => -1.0,
    };
    let mut sum = 0.0;
    for (i, &[l, m, n]) in basis.triples().iter().enumerate() {
        let c = result.vector[i];
        let (l, m, n) = (l as usize, m as usize, n as usize);
        let mut basis_val = lu[l] * lv[m];
        if l != m {
            basis_val += swap_sign * lu[m] * lv[l];
        }
        sum += c * basis_val * lw[n];
    }
    Ok((-0.5 * (u + v + w)).exp() * sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_pencil, enumerate_basis};
    use crate::pipeline::Interaction;
    use crate::transfer::derive_recurrence;

    fn one_by_one(a: i64, b: i64) -> SparsePencil {
        SparsePencil {
            dim: 1,
            entries: vec![(0, 0, a, b)],
            charge: 2,
            omega: 0,
            sym: SymClass::Para,
        }
    }

    #[test]
    fn sign_flips_at_scalar_root() {
        let p = one_by_one(3, 1); // root at eps = 3
        assert_eq!(log_det_sign(&p, 2.9).unwrap().0, 1);
        assert_eq!(log_det_sign(&p, 3.1).unwrap().0, -1);
        let root = find_largest_root(
            &p,
            &RootOptions {
                eps_hi: Some(4.0),
                scan_step: Some(0.3),
                tol: 1e-13,
            },
        )
        .unwrap();
        assert!((root.eps - 3.0).abs() < 1e-10);
    }

    #[test]
    fn no_root_is_reported_with_trace() {
        let p = one_by_one(1, 0); // det is constant 1
        let err = find_largest_root(&p, &RootOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NoRootFound { .. }));
    }

    #[test]
    fn empty_pencil_is_an_error() {
        let p = SparsePencil {
            dim: 0,
            entries: vec![],
            charge: 1,
            omega: 0,
            sym: SymClass::Ortho,
        };
        assert!(matches!(log_det_sign(&p, 1.0), Err(Error::EmptyPencil)));
    }

    #[test]
    fn interaction_free_root_is_the_charge() {
        let rec = derive_recurrence(Interaction::Off).unwrap();
        let basis = enumerate_basis(2, SymClass::Para);
        let pencil = assemble_pencil(&rec, &basis, 2).unwrap();
        let root = find_largest_root(&pencil, &RootOptions::default()).unwrap();
        assert!((root.eps - 2.0).abs() < 1e-10, "eps = {}", root.eps);
    }

    #[test]
    fn interaction_free_vector_is_delta() {
        let rec = derive_recurrence(Interaction::Off).unwrap();
        let basis = enumerate_basis(2, SymClass::Para);
        let pencil = assemble_pencil(&rec, &basis, 2).unwrap();
        let result = solve_pencil(&pencil, &RootOptions::default(), 1e-8).unwrap();
        let idx = basis.index_of([0, 0, 0]).unwrap();
        assert!((result.vector[idx].abs() - 1.0).abs() < 1e-8);
        for (i, v) in result.vector.iter().enumerate() {
            if i != idx {
                assert!(v.abs() < 1e-8, "component {i} = {v}");
            }
        }
    }

    #[test]
    fn smallest_truncation_closed_form() {
        // The omega = 0 para pencil for Z = 2 is the scalar -54 + 32 eps,
        // so eps = 27/16 and E = -(27/16)^2.
        let rec = derive_recurrence(Interaction::On).unwrap();
        let basis = enumerate_basis(0, SymClass::Para);
        let pencil = assemble_pencil(&rec, &basis, 2).unwrap();
        assert_eq!(pencil.entries, vec![(0, 0, -54, -32)]);
        let result = solve_pencil(&pencil, &RootOptions::default(), 1e-8).unwrap();
        assert!((result.epsilon - 27.0 / 16.0).abs() < 1e-12);
        assert!((result.energy + 729.0 / 256.0).abs() < 1e-12);
    }

    #[test]
    fn rayleigh_matches_root() {
        let rec = derive_recurrence(Interaction::On).unwrap();
        let basis = enumerate_basis(4, SymClass::Para);
        let pencil = assemble_pencil(&rec, &basis, 2).unwrap();
        let result = solve_pencil(&pencil, &RootOptions::default(), 1e-8).unwrap();
        let rq = rayleigh_quotient(&pencil, &result.vector);
        assert!((rq - result.epsilon).abs() < 1e-8);
    }

    #[test]
    fn wavefunction_respects_para_symmetry() {
        let rec = derive_recurrence(Interaction::On).unwrap();
        let basis = enumerate_basis(2, SymClass::Para);
        let pencil = assemble_pencil(&rec, &basis, 2).unwrap();
        let result = solve_pencil(&pencil, &RootOptions::default(), 1e-8).unwrap();
        let a = evaluate_wavefunction(&result, 1.3, 0.7, 1.1).unwrap();
        let b = evaluate_wavefunction(&result, 0.7, 1.3, 1.1).unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn triangle_violation_is_rejected() {
        let rec = derive_recurrence(Interaction::On).unwrap();
        let basis = enumerate_basis(0, SymClass::Para);
        let pencil = assemble_pencil(&rec, &basis, 2).unwrap();
        let result = solve_pencil(&pencil, &RootOptions::default(), 1e-8).unwrap();
        assert!(matches!(
            evaluate_wavefunction(&result, 1.0, 1.0, 5.0),
            Err(Error::TriangleViolation { .. })
        ));
    }
}

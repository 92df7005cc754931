//! Truncation and symmetrization of the infinite recurrence into an exact
//! integer pencil `M(eps) = A - eps B`.
//!
//! The basis consists of the triples `(l, m, n)` with `l + m + n <= omega`
//! restricted to the fundamental domain of the electron-swap symmetry:
//! `l <= m` for para (symmetric) states, `l < m` for ortho (antisymmetric)
//! states. Triples are ordered graded-lexicographically by
//! `(l + m + n, l, m)`. One equation is written per basis triple; stencil
//! targets outside the domain are folded back with the symmetry sign or
//! dropped by the truncation.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::Var;
use crate::transfer::{sequence_universe, Recurrence};

/// Spin-symmetry class of the coefficient array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SymClass {
    /// Symmetric: `A(l,m,n) = A(m,l,n)` (singlet).
    Para,
    /// Antisymmetric: `A(l,m,n) = -A(m,l,n)` (triplet).
    Ortho,
}

impl SymClass {
    pub fn label(self) -> &'static str {
        match self {
            SymClass::Para => "para",
            SymClass::Ortho => "ortho",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "para" => Ok(SymClass::Para),
            "ortho" => Ok(SymClass::Ortho),
            other => Err(Error::Parse {
                what: "symmetry class".into(),
                detail: format!("expected \"para\" or \"ortho\", got {other:?}"),
            }),
        }
    }
}

impl fmt::Display for SymClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// The ordered fundamental-domain basis for a given truncation order.
#[derive(Debug, Clone)]
pub struct Basis {
    pub omega: u32,
    pub sym: SymClass,
    triples: Vec<[u32; 3]>,
    index: HashMap<[u32; 3], usize>,
}

/// Number of all triples with `l + m + n <= omega`: `C(omega + 3, 3)`.
pub fn total_triples(omega: u32) -> usize {
    let w = omega as usize;
    (w + 1) * (w + 2) * (w + 3) / 6
}

/// Number of triples with `l = m` and `2l + n <= omega`.
pub fn diagonal_triples(omega: u32) -> usize {
    (0..=omega / 2).map(|l| (omega - 2 * l + 1) as usize).sum()
}

/// Closed-form dimension: `(T + D)/2` for para, `(T - D)/2` for ortho.
pub fn basis_dimension(omega: u32, sym: SymClass) -> usize {
    let t = total_triples(omega);
    let d = diagonal_triples(omega);
    match sym {
        SymClass::Para => (t + d) / 2,
        SymClass::Ortho => (t - d) / 2,
    }
}

/// Enumerates the basis in graded-lexicographic order by `(l + m + n, l, m)`.
pub fn enumerate_basis(omega: u32, sym: SymClass) -> Basis {
    let mut triples = Vec::new();
    for total in 0..=omega {
        for l in 0..=total {
            for m in 0..=(total - l) {
                let n = total - l - m;
                let keep = match sym {
                    SymClass::Para => l <= m,
                    SymClass::Ortho => l < m,
                };
                if keep {
                    triples.push([l, m, n]);
                }
            }
        }
    }
    debug_assert_eq!(triples.len(), basis_dimension(omega, sym));
    let index = triples
        .iter()
        .enumerate()
        .map(|(i, &t)| (t, i))
        .collect();
    Basis {
        omega,
        sym,
        triples,
        index,
    }
}

impl Basis {
    pub fn dim(&self) -> usize {
        self.triples.len()
    }

    pub fn triples(&self) -> &[[u32; 3]] {
        &self.triples
    }

    pub fn index_of(&self, triple: [u32; 3]) -> Option<usize> {
        self.index.get(&triple).copied()
    }

    /// Stable one-line description of the ordering, stored in manifests.
    pub fn ordering_description(&self) -> String {
        format!(
            "graded lexicographic by (l+m+n, l, m) over the {} fundamental domain ({})",
            self.sym.label(),
            match self.sym {
                SymClass::Para => "l <= m",
                SymClass::Ortho => "l < m",
            }
        )
    }
}

/// Image of an index triple under truncation and symmetry folding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Folded {
    /// Negative index, beyond the truncation order, or on the ortho diagonal.
    Zero,
    /// Canonical representative with the symmetry sign.
    Canonical { triple: [u32; 3], sign: i8 },
}

/// Folds an arbitrary (possibly out-of-domain) triple into the fundamental
/// domain: negative indices and `l + m + n > omega` give zero, `l > m` swaps
/// the first two indices with sign `+1` (para) or `-1` (ortho), and the
/// ortho diagonal `l = m` gives zero.
pub fn fold(triple: [i64; 3], sym: SymClass, omega: u32) -> Folded {
    let [l, m, n] = triple;
    if l < 0 || m < 0 || n < 0 {
        return Folded::Zero;
    }
    if l + m + n > i64::from(omega) {
        return Folded::Zero;
    }
    let (l, m, n) = (l as u32, m as u32, n as u32);
    if l > m {
        let sign = match sym {
            SymClass::Para => 1,
            SymClass::Ortho => -1,
        };
        return Folded::Canonical {
            triple: [m, l, n],
            sign,
        };
    }
    if sym == SymClass::Ortho && l == m {
        return Folded::Zero;
    }
    Folded::Canonical {
        triple: [l, m, n],
        sign: 1,
    }
}

/// Exact integer sparse pencil `M(eps) = A - eps B` for one charge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsePencil {
    pub dim: usize,
    /// `(row, col, a, b)` with `M[row, col] = a - eps * b`; sorted by
    /// `(row, col)`, at most 33 structural entries per row.
    pub entries: Vec<(u32, u32, i64, i64)>,
    pub charge: u32,
    pub omega: u32,
    pub sym: SymClass,
}

/// The recurrence compiled to integer monomial lists for fast exact
/// evaluation: each stencil coefficient is split as `c0 + eps * c1` with
/// `c0`, `c1` integer polynomials in `(l, m, n, Z)`.
struct CompiledStencil {
    terms: Vec<([i64; 3], Vec<(i128, [u32; 4])>, Vec<(i128, [u32; 4])>)>,
}

fn compile(rec: &Recurrence) -> Result<CompiledStencil> {
    let uni = sequence_universe();
    let eps_idx = uni.index_of(Var::Eps).unwrap();
    let mut terms = Vec::new();
    for (shift, coeff) in rec.seq_op().iter() {
        if coeff.degree_in(Var::Eps) > 1 {
            return Err(Error::EpsDegreeTooHigh(coeff.degree_in(Var::Eps)));
        }
        let mut c0 = Vec::new();
        let mut c1 = Vec::new();
        for (mono, c) in coeff.iter_terms() {
            let exps = mono.exponents();
            let lmnz = [exps[0], exps[1], exps[2], exps[3]];
            debug_assert!(c.denom().is_one());
            let int = c
                .numer()
                .to_i128()
                .expect("recurrence coefficients fit 128 bits");
            if exps[eps_idx] == 0 {
                c0.push((int, lmnz));
            } else {
                c1.push((int, lmnz));
            }
        }
        terms.push((*shift, c0, c1));
    }
    Ok(CompiledStencil { terms })
}

fn eval_monomials(parts: &[(i128, [u32; 4])], point: [i128; 4]) -> i128 {
    let mut sum = 0i128;
    for (c, exps) in parts {
        let mut term = *c;
        for (value, &e) in point.iter().zip(exps) {
            for _ in 0..e {
                term *= value;
            }
        }
        sum += term;
    }
    sum
}

/// Assembles the exact pencil: one equation per basis triple, stencil
/// coefficients evaluated at the anchor with `eps` kept symbolic (each entry
/// is linear, `c0 + c1 eps`), targets folded through the symmetry.
pub fn assemble_pencil(rec: &Recurrence, basis: &Basis, charge: u32) -> Result<SparsePencil> {
    let compiled = compile(rec)?;
    let mut accum: BTreeMap<(u32, u32), (i128, i128)> = BTreeMap::new();
    for (row, &anchor) in basis.triples().iter().enumerate() {
        let point = [
            i128::from(anchor[0]),
            i128::from(anchor[1]),
            i128::from(anchor[2]),
            i128::from(charge),
        ];
        for (shift, c0, c1) in &compiled.terms {
            let target = [
                i64::from(anchor[0]) + shift[0],
                i64::from(anchor[1]) + shift[1],
                i64::from(anchor[2]) + shift[2],
            ];
            let Folded::Canonical { triple, sign } = fold(target, basis.sym, basis.omega)
            else {
                continue;
            };
            let col = basis
                .index_of(triple)
                .expect("folded triple is in the basis");
            let a = i128::from(sign) * eval_monomials(c0, point);
            let b = -i128::from(sign) * eval_monomials(c1, point);
            if a == 0 && b == 0 {
                continue;
            }
            let entry = accum.entry((row as u32, col as u32)).or_insert((0, 0));
            entry.0 += a;
            entry.1 += b;
        }
    }
    let mut entries = Vec::with_capacity(accum.len());
    for ((row, col), (a, b)) in accum {
        if a == 0 && b == 0 {
            continue;
        }
        let a = i64::try_from(a).map_err(|_| Error::EntryOverflow { row: row as usize })?;
        let b = i64::try_from(b).map_err(|_| Error::EntryOverflow { row: row as usize })?;
        entries.push((row, col, a, b));
    }
    Ok(SparsePencil {
        dim: basis.dim(),
        entries,
        charge,
        omega: basis.omega,
        sym: basis.sym,
    })
}

impl SparsePencil {
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn max_row_entries(&self) -> usize {
        let mut counts = vec![0usize; self.dim];
        for &(row, _, _, _) in &self.entries {
            counts[row as usize] += 1;
        }
        counts.into_iter().max().unwrap_or(0)
    }

    /// Reindexes rows and columns by the same permutation
    /// (`new[perm[i]] = old[i]`); the spectrum is unchanged.
    pub fn permuted(&self, perm: &[usize]) -> SparsePencil {
        assert_eq!(perm.len(), self.dim);
        let mut entries: Vec<(u32, u32, i64, i64)> = self
            .entries
            .iter()
            .map(|&(r, c, a, b)| (perm[r as usize] as u32, perm[c as usize] as u32, a, b))
            .collect();
        entries.sort_unstable_by_key(|&(r, c, _, _)| (r, c));
        SparsePencil {
            dim: self.dim,
            entries,
            charge: self.charge,
            omega: self.omega,
            sym: self.sym,
        }
    }

    /// The column of `A - Z*B` belonging to a triple, as exact integers.
    /// Used by the interaction-free kernel checks.
    pub fn column_at_integer_eps(&self, col: u32, eps: i64) -> Vec<i64> {
        let mut out = vec![0i64; self.dim];
        for &(r, c, a, b) in &self.entries {
            if c == col {
                out[r as usize] = a - eps * b;
            }
        }
        out
    }
}

/// Sidecar manifest describing an exported pencil pair.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct PencilManifest {
    pub omega: u32,
    pub symmetry: String,
    pub charge: u32,
    pub dim: usize,
    pub nnz: usize,
    pub ordering: String,
}

fn write_matrix_market(
    path: &Path,
    dim: usize,
    entries: impl Iterator<Item = (u32, u32, i64)>,
    count: usize,
    comment: &str,
) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut out = std::io::BufWriter::new(file);
    let io_err = |e| Error::io(format!("writing {}", path.display()), e);
    writeln!(out, "%%MatrixMarket matrix coordinate integer general").map_err(io_err)?;
    writeln!(out, "% {comment}").map_err(io_err)?;
    writeln!(out, "{dim} {dim} {count}").map_err(io_err)?;
    for (r, c, v) in entries {
        writeln!(out, "{} {} {}", r + 1, c + 1, v).map_err(io_err)?;
    }
    Ok(())
}

/// Writes `A` and `B` as a pair of coordinate-format integer matrices plus a
/// JSON manifest into `dir` (`pencil_a.mtx`, `pencil_b.mtx`,
/// `manifest.json`). Zero entries of one matrix that are structural in the
/// other are skipped in its file.
pub fn export_matrix_market(pencil: &SparsePencil, dir: &Path) -> Result<PencilManifest> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let basis = enumerate_basis(pencil.omega, pencil.sym);
    let manifest = PencilManifest {
        omega: pencil.omega,
        symmetry: pencil.sym.label().into(),
        charge: pencil.charge,
        dim: pencil.dim,
        nnz: pencil.nnz(),
        ordering: basis.ordering_description(),
    };
    let a_entries: Vec<_> = pencil
        .entries
        .iter()
        .filter(|&&(_, _, a, _)| a != 0)
        .map(|&(r, c, a, _)| (r, c, a))
        .collect();
    let b_entries: Vec<_> = pencil
        .entries
        .iter()
        .filter(|&&(_, _, _, b)| b != 0)
        .map(|&(r, c, _, b)| (r, c, b))
        .collect();
    let comment = format!(
        "two-electron pencil, omega={} symmetry={} Z={}",
        pencil.omega, pencil.sym, pencil.charge
    );
    write_matrix_market(
        &dir.join("pencil_a.mtx"),
        pencil.dim,
        a_entries.iter().copied(),
        a_entries.len(),
        &format!("{comment}, matrix A"),
    )?;
    write_matrix_market(
        &dir.join("pencil_b.mtx"),
        pencil.dim,
        b_entries.iter().copied(),
        b_entries.len(),
        &format!("{comment}, matrix B"),
    )?;
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, json)
        .map_err(|e| Error::io(format!("writing {}", manifest_path.display()), e))?;
    Ok(manifest)
}

fn read_matrix_market(path: &Path) -> Result<(usize, Vec<(u32, u32, i64)>)> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let reader = std::io::BufReader::new(file);
    let mut dim = None;
    let mut entries = Vec::new();
    let bad = |detail: String| Error::Parse {
        what: format!("matrix market file {}", path.display()),
        detail,
    };
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if dim.is_none() {
            if fields.len() != 3 {
                return Err(bad("size line must have three fields".into()));
            }
            let rows: usize = fields[0].parse().map_err(|_| bad("bad row count".into()))?;
            let cols: usize = fields[1].parse().map_err(|_| bad("bad col count".into()))?;
            if rows != cols {
                return Err(bad(format!("matrix must be square, got {rows} x {cols}")));
            }
            dim = Some(rows);
            continue;
        }
        if fields.len() != 3 {
            return Err(bad(format!("bad entry line {trimmed:?}")));
        }
        let r: u32 = fields[0].parse().map_err(|_| bad("bad row index".into()))?;
        let c: u32 = fields[1].parse().map_err(|_| bad("bad col index".into()))?;
        let v: i64 = fields[2].parse().map_err(|_| bad("bad value".into()))?;
        if r == 0 || c == 0 {
            return Err(bad("indices are 1-based".into()));
        }
        entries.push((r - 1, c - 1, v));
    }
    let dim = dim.ok_or_else(|| bad("missing size line".into()))?;
    Ok((dim, entries))
}

/// Reads back a pencil pair written by [`export_matrix_market`].
pub fn import_matrix_market(dir: &Path) -> Result<SparsePencil> {
    let manifest_path = dir.join("manifest.json");
    let manifest_text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::io(format!("reading {}", manifest_path.display()), e))?;
    let manifest: PencilManifest =
        serde_json::from_str(&manifest_text).map_err(|e| Error::Parse {
            what: format!("manifest {}", manifest_path.display()),
            detail: e.to_string(),
        })?;
    let (dim_a, a_entries) = read_matrix_market(&dir.join("pencil_a.mtx"))?;
    let (dim_b, b_entries) = read_matrix_market(&dir.join("pencil_b.mtx"))?;
    if dim_a != manifest.dim || dim_b != manifest.dim {
        return Err(Error::Parse {
            what: "pencil pair".into(),
            detail: "dimension mismatch between files and manifest".into(),
        });
    }
    let mut merged: BTreeMap<(u32, u32), (i64, i64)> = BTreeMap::new();
    for (r, c, v) in a_entries {
        merged.entry((r, c)).or_insert((0, 0)).0 = v;
    }
    for (r, c, v) in b_entries {
        merged.entry((r, c)).or_insert((0, 0)).1 = v;
    }
    Ok(SparsePencil {
        dim: manifest.dim,
        entries: merged
            .into_iter()
            .map(|((r, c), (a, b))| (r, c, a, b))
            .collect(),
        charge: manifest.charge,
        omega: manifest.omega,
        sym: SymClass::parse(&manifest.symmetry)?,
    })
}

/// Single-file JSON export of the pencil.
#[derive(Debug, Serialize, Deserialize)]
pub struct PencilJson {
    pub manifest: PencilManifest,
    /// `(row, col, a, b)` with 0-based indices.
    pub entries: Vec<(u32, u32, i64, i64)>,
}

pub fn pencil_to_json(pencil: &SparsePencil) -> PencilJson {
    let basis = enumerate_basis(pencil.omega, pencil.sym);
    PencilJson {
        manifest: PencilManifest {
            omega: pencil.omega,
            symmetry: pencil.sym.label().into(),
            charge: pencil.charge,
            dim: pencil.dim,
            nnz: pencil.nnz(),
            ordering: basis.ordering_description(),
        },
        entries: pencil.entries.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Interaction;
    use crate::transfer::derive_recurrence;

    #[test]
    fn paper_dimensions() {
        assert_eq!(basis_dimension(10, SymClass::Para), 161);
        assert_eq!(basis_dimension(60, SymClass::Para), 20336);
        assert_eq!(basis_dimension(0, SymClass::Para), 1);
        assert_eq!(basis_dimension(10, SymClass::Ortho), 125);
        assert_eq!(basis_dimension(4, SymClass::Para), 22);
    }

    #[test]
    fn closed_form_matches_enumeration() {
        for omega in 0..=20 {
            for sym in [SymClass::Para, SymClass::Ortho] {
                assert_eq!(
                    enumerate_basis(omega, sym).dim(),
                    basis_dimension(omega, sym),
                    "omega={omega} sym={sym}"
                );
            }
        }
    }

    #[test]
    fn basis_index_is_bijective() {
        let basis = enumerate_basis(8, SymClass::Para);
        for (i, &t) in basis.triples().iter().enumerate() {
            assert_eq!(basis.index_of(t), Some(i));
        }
    }

    #[test]
    fn fold_swaps_and_annihilates() {
        assert_eq!(
            fold([2, 1, 3], SymClass::Para, 10),
            Folded::Canonical {
                triple: [1, 2, 3],
                sign: 1
            }
        );
        assert_eq!(
            fold([2, 1, 3], SymClass::Ortho, 10),
            Folded::Canonical {
                triple: [1, 2, 3],
                sign: -1
            }
        );
        assert_eq!(fold([1, 1, 3], SymClass::Ortho, 10), Folded::Zero);
        assert_eq!(fold([-1, 0, 2], SymClass::Para, 10), Folded::Zero);
        assert_eq!(fold([4, 5, 2], SymClass::Para, 10), Folded::Zero);
        // Canonical triples are fixed points.
        assert_eq!(
            fold([0, 3, 1], SymClass::Para, 10),
            Folded::Canonical {
                triple: [0, 3, 1],
                sign: 1
            }
        );
    }

    #[test]
    fn interaction_free_pencil_has_delta_kernel() {
        // M(Z) e_1 = 0 exactly, where e_1 belongs to (0,0,0).
        let rec = derive_recurrence(Interaction::Off).unwrap();
        for (omega, z) in [(2u32, 1u32), (4, 2), (6, 3)] {
            let basis = enumerate_basis(omega, SymClass::Para);
            let pencil = assemble_pencil(&rec, &basis, z).unwrap();
            let col = basis.index_of([0, 0, 0]).unwrap() as u32;
            let column = pencil.column_at_integer_eps(col, i64::from(z));
            assert!(
                column.iter().all(|&x| x == 0),
                "omega={omega} Z={z}: {column:?}"
            );
        }
    }

    #[test]
    fn row_occupancy_bounded_by_stencil() {
        let rec = derive_recurrence(Interaction::On).unwrap();
        let basis = enumerate_basis(6, SymClass::Para);
        let pencil = assemble_pencil(&rec, &basis, 2).unwrap();
        assert!(pencil.max_row_entries() <= 33);
    }

    #[test]
    fn export_import_round_trip() {
        let rec = derive_recurrence(Interaction::On).unwrap();
        let basis = enumerate_basis(4, SymClass::Para);
        let pencil = assemble_pencil(&rec, &basis, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = export_matrix_market(&pencil, dir.path()).unwrap();
        assert_eq!(manifest.dim, 22);
        let back = import_matrix_market(dir.path()).unwrap();
        assert_eq!(back, pencil);
    }
}

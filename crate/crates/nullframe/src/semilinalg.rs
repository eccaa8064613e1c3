//! Linear algebra over a flat semi-Riemannian ambient space.
//!
//! Subspaces are lists of ambient column vectors.  All numerically delicate
//! steps (rank decisions, nullspaces, complements) go through one tolerance
//! convention and one deterministic pivoting rule so that downstream
//! decompositions vary continuously along base-point paths.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("no non-degenerate complement found: {0}")]
    NoNondegenerateComplement(String),
    #[error("singular pairing matrix while building transversal frame")]
    SingularPairing,
    #[error("no metric signature of index {index} makes the given vectors null")]
    NoConsistentSignature { index: usize },
    #[error("multiple metric signatures of index {index} make the given vectors null")]
    AmbiguousSignature { index: usize },
}

/// Diagonal metric diag(eps), eps entries +-1.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureMetric {
    pub eps: Vec<f64>,
}

impl SignatureMetric {
    /// All-timelike positions first is *not* assumed; `timelike` lists 0-based
    /// positions carrying -1.
    pub fn new(dim: usize, timelike: &[usize]) -> Self {
        let mut eps = vec![1.0; dim];
        for &i in timelike {
            eps[i] = -1.0;
        }
        SignatureMetric { eps }
    }

    pub fn dim(&self) -> usize {
        self.eps.len()
    }

    pub fn index(&self) -> usize {
        self.eps.iter().filter(|&&e| e < 0.0).count()
    }

    pub fn timelike_positions(&self) -> Vec<usize> {
        self.eps
            .iter()
            .enumerate()
            .filter(|(_, &e)| e < 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.iter()
            .zip(y.iter())
            .zip(self.eps.iter())
            .map(|((a, b), e)| e * a * b)
            .sum()
    }

    /// Gram matrix of the columns of `v`.
    pub fn gram(&self, v: &[DVector<f64>]) -> DMatrix<f64> {
        let k = v.len();
        DMatrix::from_fn(k, k, |i, j| self.inner(&v[i], &v[j]))
    }

    /// Cross-Gram g(a_i, b_j).
    pub fn cross_gram(&self, a: &[DVector<f64>], b: &[DVector<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(a.len(), b.len(), |i, j| self.inner(&a[i], &b[j]))
    }

    /// Apply the metric to a vector: (eps_i x_i)_i.
    pub fn lower(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(x.len(), |i, _| self.eps[i] * x[i])
    }
}

fn columns(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    (0..m.ncols()).map(|j| m.column(j).into_owned()).collect()
}

pub fn matrix_from_columns(v: &[DVector<f64>], nrows: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(nrows, v.len());
    for (j, c) in v.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

/// Scale-aware rank cutoff for singular values.
fn sv_cutoff(svals: &[f64]) -> f64 {
    let top = svals.iter().cloned().fold(0.0_f64, f64::max);
    RANK_TOL * top.max(1.0)
}

pub fn numeric_rank(m: &DMatrix<f64>) -> usize {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let svals: Vec<f64> = sv.iter().cloned().collect();
    let cut = sv_cutoff(&svals);
    svals.iter().filter(|&&s| s > cut).count()
}

/// Nullspace of `m` (right kernel), canonicalized by reduced row echelon form
/// so the answer is independent of the internal SVD basis.  Columns of the
/// result are the RREF-canonical kernel basis.
pub fn nullspace(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (nr, nc) = m.shape();
    if nc == 0 {
        return DMatrix::zeros(0, 0);
    }
    // Thin SVD of a wide matrix drops the kernel; pad with zero rows.
    let padded = if nr < nc {
        let mut p = DMatrix::zeros(nc, nc);
        p.view_mut((0, 0), (nr, nc)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(true, true);
    let svals: Vec<f64> = svd.singular_values.iter().cloned().collect();
    let cut = sv_cutoff(&svals);
    let rank = svals.iter().filter(|&&s| s > cut).count();
    let vt = svd.v_t.unwrap();
    let null_dim = nc - rank;
    if null_dim == 0 {
        return DMatrix::zeros(nc, 0);
    }
    let mut basis = DMatrix::zeros(nc, null_dim);
    for j in 0..null_dim {
        basis.set_column(j, &vt.row(rank + j).transpose());
    }
    rref_canonicalize(&basis)
}

/// Row-reduce the transpose of `basis` with deterministic greedy pivoting and
/// return the canonicalized basis as columns.  Two bases of the same subspace
/// map to the same output, and the output varies continuously wherever the
/// pivot pattern is stable.
pub fn rref_canonicalize(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let mut a = basis.transpose(); // k x n, rows are basis vectors
    let (k, n) = a.shape();
    let mut row = 0;
    let mut pivots = Vec::new();
    for col in 0..n {
        if row == k {
            break;
        }
        // Largest magnitude in this column at/below `row`.
        let (best, best_val) = (row..k)
            .map(|r| (r, a[(r, col)].abs()))
            .fold((row, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        let scale = a.amax().max(1.0);
        if best_val <= RANK_TOL * scale {
            continue;
        }
        a.swap_rows(row, best);
        let pv = a[(row, col)];
        for j in 0..n {
            a[(row, j)] /= pv;
        }
        for r in 0..k {
            if r != row {
                let f = a[(r, col)];
                if f != 0.0 {
                    for j in 0..n {
                        a[(r, j)] -= f * a[(row, j)];
                    }
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    let mut out = DMatrix::zeros(n, row);
    for r in 0..row {
        out.set_column(r, &a.row(r).transpose());
    }
    out
}

/// Kernel of the Gram form: vectors v in span(basis) with g(v, b_i) = 0 for
/// all basis vectors.  Returned as ambient columns (coefficients canonicalized).
pub fn radical(metric: &SignatureMetric, basis: &[DVector<f64>]) -> (Vec<DVector<f64>>, DMatrix<f64>) {
    let gram = metric.gram(basis);
    let coeffs = nullspace(&gram);
    let b = matrix_from_columns(basis, metric.dim());
    let rad = &b * &coeffs;
    (columns(&rad), coeffs)
}

/// Orthogonal space of span(basis) inside the whole ambient space.
pub fn ambient_orthogonal(metric: &SignatureMetric, basis: &[DVector<f64>]) -> Vec<DVector<f64>> {
    // rows: g(b_i, .) as covectors
    let n = metric.dim();
    let mut rows = DMatrix::zeros(basis.len(), n);
    for (i, b) in basis.iter().enumerate() {
        rows.set_row(i, &metric.lower(b).transpose());
    }
    columns(&nullspace(&rows))
}

/// Vectors in span(inside) orthogonal to all of `against`.
pub fn orthogonal_within(
    metric: &SignatureMetric,
    inside: &[DVector<f64>],
    against: &[DVector<f64>],
) -> Vec<DVector<f64>> {
    let cross = metric.cross_gram(against, inside);
    let coeffs = nullspace(&cross);
    let b = matrix_from_columns(inside, metric.dim());
    columns(&(&b * &coeffs))
}

/// Minimum |eigenvalue| of a symmetric matrix.
pub fn min_abs_eig(m: &DMatrix<f64>) -> f64 {
    if m.ncols() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|e| e.abs())
        .fold(f64::INFINITY, f64::min)
}

/// Pick a screen complement: a subset of `candidates` (taken greedily, in
/// order) that is independent of `rad` and spans a non-degenerate complement
/// of span(rad) inside span(rad + candidates).  Returns the chosen candidate
/// vectors and their indices into `candidates`.
pub fn screen_complement(
    metric: &SignatureMetric,
    rad: &[DVector<f64>],
    candidates: &[DVector<f64>],
    target_dim: usize,
) -> Result<(Vec<DVector<f64>>, Vec<usize>), LinalgError> {
    let n = metric.dim();
    let mut chosen: Vec<DVector<f64>> = Vec::new();
    let mut indices = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        if chosen.len() == target_dim {
            break;
        }
        let mut trial: Vec<DVector<f64>> = rad.to_vec();
        trial.extend(chosen.iter().cloned());
        trial.push(c.clone());
        // Normalize columns so the rank test is scale independent.
        let normed: Vec<DVector<f64>> = trial
            .iter()
            .map(|v| {
                let nrm = v.norm();
                if nrm > 0.0 { v / nrm } else { v.clone() }
            })
            .collect();
        let mat = matrix_from_columns(&normed, n);
        if numeric_rank(&mat) < trial.len() {
            continue;
        }
        let mut screen_trial = chosen.clone();
        screen_trial.push(c.clone());
        let gram = metric.gram(&screen_trial);
        if min_abs_eig(&gram) <= RANK_TOL * gram.amax().max(1.0) {
            continue;
        }
        chosen.push(c.clone());
        indices.push(i);
    }
    if chosen.len() < target_dim {
        return Err(LinalgError::NoNondegenerateComplement(format!(
            "found {} of {target_dim} screen directions",
            chosen.len()
        )));
    }
    Ok((chosen, indices))
}

/// Lightlike transversal frame: given the radical `xi`, a non-degenerate
/// screen `stm`, and the screen normal bundle `stmperp`, produce N_i with
/// g(N_i, xi_j) = delta_ij, g(N_i, N_j) = 0, N_i orthogonal to both screens.
pub fn lightlike_transversal(
    metric: &SignatureMetric,
    xi: &[DVector<f64>],
    stm: &[DVector<f64>],
    stmperp: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>, LinalgError> {
    let r = xi.len();
    let n = metric.dim();
    // Complement of S(TM) + S(TM^perp): the orthogonal space of both screens.
    let mut screens: Vec<DVector<f64>> = stm.to_vec();
    screens.extend(stmperp.iter().cloned());
    let ortho = ambient_orthogonal(metric, &screens);
    // xi lives in `ortho`; solve for V_i in span(ortho) with g(V_i, xi_j) = delta_ij.
    let a = DMatrix::from_fn(ortho.len(), r, |al, j| metric.inner(&ortho[al], &xi[j]));
    let ata = a.transpose() * &a;
    let ata_inv = ata
        .try_inverse()
        .ok_or(LinalgError::SingularPairing)?;
    let c = &a * ata_inv; // ortho.len() x r, columns give V_i coefficients
    let omat = matrix_from_columns(&ortho, n);
    let vmat = &omat * &c;
    let v: Vec<DVector<f64>> = columns(&vmat);
    // Null-correct: N_i = V_i - 1/2 sum_k g(V_i, V_k) xi_k keeps the pairing
    // and kills g(N_i, N_j).
    let mut out = Vec::with_capacity(r);
    for i in 0..r {
        let mut ni = v[i].clone();
        for (k, xik) in xi.iter().enumerate() {
            ni -= xik * (0.5 * metric.inner(&v[i], &v[k]));
        }
        out.push(ni);
    }
    Ok(out)
}

/// All sets of timelike coordinate positions (of given count) under which
/// every vector in `rad` is orthogonal to the whole of `tangent` (and in
/// particular null).  With an empty `tangent`, only nullity of `rad` is
/// required.
pub fn infer_signature_all(
    dim: usize,
    index: usize,
    tangent: &[DVector<f64>],
    rad: &[DVector<f64>],
) -> Vec<Vec<usize>> {
    let mut hits = Vec::new();
    for combo in (0..dim).combinations(index) {
        let metric = SignatureMetric::new(dim, &combo);
        let ok = rad.iter().all(|v| {
            let snorm = v.norm();
            let null_ok = metric.inner(v, v).abs() <= RANK_TOL * (snorm * snorm).max(1.0);
            null_ok
                && tangent.iter().all(|u| {
                    metric.inner(v, u).abs() <= RANK_TOL * (snorm * u.norm()).max(1.0)
                })
        });
        if ok {
            hits.push(combo);
        }
    }
    hits
}

/// The unique signature consistent with `rad` being radical directions of
/// span(`tangent`).  Errors if none or several signatures qualify.
pub fn infer_signature(
    dim: usize,
    index: usize,
    tangent: &[DVector<f64>],
    rad: &[DVector<f64>],
) -> Result<Vec<usize>, LinalgError> {
    let mut hits = infer_signature_all(dim, index, tangent, rad);
    match hits.len() {
        0 => Err(LinalgError::NoConsistentSignature { index }),
        1 => Ok(hits.pop().unwrap()),
        _ => Err(LinalgError::AmbiguousSignature { index }),
    }
}

/// Frobenius distance between the Euclidean orthogonal projectors of two
/// subspaces; 0 for equal spans, up to sqrt(2*min(dim)) for orthogonal ones.
pub fn subspace_distance(a: &[DVector<f64>], b: &[DVector<f64>], dim: usize) -> f64 {
    let proj = |v: &[DVector<f64>]| -> DMatrix<f64> {
        if v.is_empty() {
            return DMatrix::zeros(dim, dim);
        }
        let m = matrix_from_columns(v, dim);
        let qr = m.qr();
        let q = qr.q();
        // Keep only the full-rank part.
        let r = numeric_rank(&matrix_from_columns(v, dim));
        let qr_cols: Vec<DVector<f64>> = (0..r).map(|j| q.column(j).into_owned()).collect();
        let qm = matrix_from_columns(&qr_cols, dim);
        &qm * qm.transpose()
    };
    (proj(a) - proj(b)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(entries: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(entries)
    }

    #[test]
    fn lorentz_inner() {
        let g = SignatureMetric::new(3, &[0]);
        let x = v(&[1.0, 1.0, 0.0]);
        assert_eq!(g.inner(&x, &x), 0.0);
        let y = v(&[0.0, 1.0, 0.0]);
        assert_eq!(g.inner(&y, &y), 1.0);
    }

    #[test]
    fn radical_of_null_plane() {
        // span{(1,1,0), (0,0,1)} in R^3_1: radical is span{(1,1,0)}.
        let g = SignatureMetric::new(3, &[0]);
        let basis = vec![v(&[1.0, 1.0, 0.0]), v(&[0.0, 0.0, 1.0])];
        let (rad, _) = radical(&g, &basis);
        assert_eq!(rad.len(), 1);
        let r = &rad[0];
        assert!((r[0] - r[1]).abs() < 1e-12);
        assert!(r[2].abs() < 1e-12);
        assert!(g.inner(r, r).abs() < 1e-12);
    }

    #[test]
    fn nullspace_wide_matrix() {
        // 1x3 matrix [1, 1, 0]: kernel dim 2.
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let k = nullspace(&m);
        assert_eq!(k.ncols(), 2);
        for j in 0..2 {
            let col = k.column(j);
            assert!((col[0] + col[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn rref_is_basis_invariant() {
        let b1 = DMatrix::from_columns(&[v(&[1.0, 0.0, 1.0]), v(&[0.0, 1.0, 1.0])]);
        let mixed = DMatrix::from_columns(&[
            v(&[1.0, 0.0, 1.0]) * 2.0 + v(&[0.0, 1.0, 1.0]),
            v(&[1.0, 0.0, 1.0]) - v(&[0.0, 1.0, 1.0]) * 3.0,
        ]);
        let c1 = rref_canonicalize(&b1);
        let c2 = rref_canonicalize(&mixed);
        assert!((c1 - c2).norm() < 1e-12);
    }

    #[test]
    fn transversal_frame_toy() {
        // xi = (1,1,0) in R^3_1, screen = span{(0,0,1)}, empty stmperp.
        let g = SignatureMetric::new(3, &[0]);
        let xi = vec![v(&[1.0, 1.0, 0.0])];
        let stm = vec![v(&[0.0, 0.0, 1.0])];
        let n = lightlike_transversal(&g, &xi, &stm, &[]).unwrap();
        assert_eq!(n.len(), 1);
        let nv = &n[0];
        assert!((nv[0] + 0.5).abs() < 1e-12);
        assert!((nv[1] - 0.5).abs() < 1e-12);
        assert!(nv[2].abs() < 1e-12);
        assert!(g.inner(nv, &xi[0]) - 1.0 < 1e-12);
        assert!(g.inner(nv, nv).abs() < 1e-12);
    }

    #[test]
    fn infer_signature_unique() {
        // When dim == 2*index, negating the metric preserves null vectors,
        // so the answer is two-fold ambiguous no matter the input.
        let nulls = vec![v(&[1.0, 1.0, 0.0, 0.0]), v(&[0.0, 0.0, 1.0, 1.0])];
        let hit = infer_signature(4, 2, &[], &nulls);
        assert!(matches!(hit, Err(LinalgError::AmbiguousSignature { .. })));
        // dim 3, index 1: (1,1,0) and (1,0,1) both null only for timelike {0}.
        let nulls2 = vec![v(&[1.0, 1.0, 0.0]), v(&[1.0, 0.0, 1.0])];
        let hit2 = infer_signature(3, 1, &[], &nulls2).unwrap();
        assert_eq!(hit2, vec![0]);
    }

    #[test]
    fn screen_complement_skips_degenerate() {
        // rad = (1,1,0); candidate list starts with a vector that is
        // independent but makes a degenerate screen.
        let g = SignatureMetric::new(3, &[0]);
        let rad = vec![v(&[1.0, 1.0, 0.0])];
        let cands = vec![v(&[1.0, -1.0, 0.0]), v(&[0.0, 0.0, 1.0])];
        // (1,-1,0) is spacelike (g = -1 + 1... actually -1*1 + 1*1 = 0)? No:
        // g((1,-1,0),(1,-1,0)) = -1 + 1 = 0, null -> degenerate screen.
        let (chosen, idx) = screen_complement(&g, &rad, &cands, 1).unwrap();
        assert_eq!(idx, vec![1]);
        assert_eq!(chosen.len(), 1);
    }

    #[test]
    fn subspace_distance_zero_for_same_span() {
        let a = vec![v(&[1.0, 0.0, 0.0]), v(&[0.0, 1.0, 0.0])];
        let b = vec![v(&[1.0, 1.0, 0.0]), v(&[1.0, -1.0, 0.0])];
        assert!(subspace_distance(&a, &b, 3) < 1e-12);
        let c = vec![v(&[0.0, 0.0, 1.0])];
        assert!(subspace_distance(&a, &c, 3) > 1.0);
    }
}

//! Lightlike submanifold decompositions.
//!
//! A parametrized submanifold of a flat semi-Riemannian space is split at each
//! base point into radical, screen, screen-normal, and lightlike transversal
//! blocks, classified by radical rank, and probed for screen genericity with
//! respect to the ambient bronze structure.

use crate::exprdsl::{eval_jet2, EvalError, ExprAst};
use crate::semilinalg::{
    self, ambient_orthogonal, lightlike_transversal, matrix_from_columns, numeric_rank,
    orthogonal_within, radical, rref_canonicalize, screen_complement, LinalgError,
    SignatureMetric, RANK_TOL,
};
use crate::structure::{BronzeStructure, LMParams};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DecompError {
    #[error("embedding evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("tangent frame is rank deficient: rank {rank} of {expected}")]
    RankDeficientFrame { rank: usize, expected: usize },
}

/// Immersion data with exact first and second derivatives.
#[derive(Debug, Clone)]
pub struct EmbeddingJet {
    pub point: DVector<f64>,
    /// n x m Jacobian, columns are coordinate partials.
    pub jac: DMatrix<f64>,
    /// Per ambient coordinate: m x m Hessian.
    pub hess: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct ManifoldSpec {
    pub param_dim: usize,
    pub ambient_dim: usize,
    pub metric: SignatureMetric,
    pub embedding: Vec<ExprAst>,
    pub bronze: BronzeStructure,
    pub lm: LMParams,
    /// Optional k x m matrix whose rows combine coordinate partials into the
    /// working tangent frame; identity when absent.  k < m is allowed when
    /// some parameters are degenerate directions of the immersion.
    pub frame: Option<DMatrix<f64>>,
    pub domain: Vec<(f64, f64)>,
}

impl ManifoldSpec {
    /// Rows of the frame matrix = dimension of the working tangent frame.
    pub fn frame_dim(&self) -> usize {
        self.frame.as_ref().map_or(self.param_dim, |f| f.nrows())
    }

    /// k x m matrix mapping frame index to parameter direction.
    pub fn frame_matrix(&self) -> DMatrix<f64> {
        self.frame
            .clone()
            .unwrap_or_else(|| DMatrix::identity(self.param_dim, self.param_dim))
    }

    pub fn eval_jets(&self, t: &[f64]) -> Result<EmbeddingJet, EvalError> {
        let n = self.ambient_dim;
        let m = self.param_dim;
        let mut point = DVector::zeros(n);
        let mut jac = DMatrix::zeros(n, m);
        let mut hess = Vec::with_capacity(n);
        for (i, ast) in self.embedding.iter().enumerate() {
            let j = eval_jet2(ast, t)?;
            point[i] = j.value;
            jac.set_row(i, &j.grad.transpose());
            hess.push(j.hess);
        }
        Ok(EmbeddingJet { point, jac, hess })
    }

    /// Tangent frame vectors B_a = Jac * frame_row_a.
    pub fn tangent_frame(&self, jet: &EmbeddingJet) -> Vec<DVector<f64>> {
        let fm = self.frame_matrix();
        (0..fm.nrows())
            .map(|a| &jet.jac * fm.row(a).transpose())
            .collect()
    }

    /// Exact ambient directional derivative of frame field B_b along frame
    /// direction B_a, via the embedding Hessians.
    pub fn frame_derivative(&self, jet: &EmbeddingJet, a: usize, b: usize) -> DVector<f64> {
        let fm = self.frame_matrix();
        let da = fm.row(a).transpose();
        let db = fm.row(b).transpose();
        DVector::from_fn(self.ambient_dim, |i, _| (da.transpose() * &jet.hess[i] * &db)[(0, 0)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    RLightlike(usize),
    Coisotropic,
    Isotropic,
    TotallyLightlike,
    NonDegenerate,
}

impl Classification {
    pub fn from_dims(rad: usize, dim: usize, codim: usize) -> Self {
        if rad == 0 {
            Classification::NonDegenerate
        } else if rad == dim && rad == codim {
            Classification::TotallyLightlike
        } else if rad == codim {
            Classification::Coisotropic
        } else if rad == dim {
            Classification::Isotropic
        } else {
            Classification::RLightlike(rad)
        }
    }

    pub fn label(&self) -> String {
        match self {
            Classification::RLightlike(r) => format!("{r}-lightlike"),
            Classification::Coisotropic => "coisotropic".into(),
            Classification::Isotropic => "isotropic".into(),
            Classification::TotallyLightlike => "totally lightlike".into(),
            Classification::NonDegenerate => "non-degenerate".into(),
        }
    }
}

/// Pointwise block decomposition of the ambient space along the submanifold:
/// TM = Rad + S(TM), TM^perp = Rad + S(TM^perp), tr = ltr + S(TM^perp).
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub t: Vec<f64>,
    pub point: DVector<f64>,
    /// Working tangent frame B_1..B_k.
    pub tm: Vec<DVector<f64>>,
    pub tmperp: Vec<DVector<f64>>,
    /// Radical basis xi_1..xi_r (canonical coefficients over `tm`).
    pub rad: Vec<DVector<f64>>,
    /// r x k coefficient matrix of `rad` over `tm` (columns are coefficient
    /// vectors).
    pub rad_coeffs: DMatrix<f64>,
    pub stm: Vec<DVector<f64>>,
    /// Indices into `tm` of the frame vectors chosen for the screen.
    pub stm_frame_indices: Vec<usize>,
    pub stmperp: Vec<DVector<f64>>,
    /// Lightlike transversal frame N_1..N_r paired with `rad`.
    pub ltr: Vec<DVector<f64>>,
    pub classification: Classification,
}

/// Coefficients of an ambient vector over the four blocks of a decomposition.
#[derive(Debug, Clone)]
pub struct Expansion {
    /// Over xi_i.
    pub rad: Vec<f64>,
    /// Over N_i.
    pub ltr: Vec<f64>,
    /// Over the screen basis.
    pub screen: Vec<f64>,
    /// Over the screen-normal basis.
    pub sperp: Vec<f64>,
    pub residual: f64,
}

impl Decomposition {
    pub fn rad_dim(&self) -> usize {
        self.rad.len()
    }

    pub fn dim(&self) -> usize {
        self.tm.len()
    }

    pub fn codim(&self) -> usize {
        self.tmperp.len()
    }

    fn ambient_dim(&self) -> usize {
        self.point.len()
    }

    /// Expand an ambient vector over Rad + S(TM) + ltr + S(TM^perp).  The
    /// radical coefficient is read off against N_i, the transversal one
    /// against xi_i; screen blocks are solved through their (non-degenerate)
    /// Gram matrices.
    pub fn expand(&self, metric: &SignatureMetric, v: &DVector<f64>) -> Expansion {
        let r = self.rad.len();
        let rad_c: Vec<f64> = (0..r).map(|i| metric.inner(v, &self.ltr[i])).collect();
        let ltr_c: Vec<f64> = (0..r).map(|i| metric.inner(v, &self.rad[i])).collect();
        let solve_block = |basis: &[DVector<f64>]| -> Vec<f64> {
            if basis.is_empty() {
                return Vec::new();
            }
            let gram = metric.gram(basis);
            let rhs = DVector::from_fn(basis.len(), |i, _| metric.inner(&basis[i], v));
            let sol = gram.lu().solve(&rhs).expect("screen Gram is non-degenerate");
            sol.iter().cloned().collect()
        };
        let screen_c = solve_block(&self.stm);
        let sperp_c = solve_block(&self.stmperp);
        let mut recon = DVector::zeros(v.len());
        for i in 0..r {
            recon += &self.rad[i] * rad_c[i] + &self.ltr[i] * ltr_c[i];
        }
        for (c, b) in screen_c.iter().zip(&self.stm) {
            recon += b * *c;
        }
        for (c, b) in sperp_c.iter().zip(&self.stmperp) {
            recon += b * *c;
        }
        Expansion {
            rad: rad_c,
            ltr: ltr_c,
            screen: screen_c,
            sperp: sperp_c,
            residual: (v - recon).norm(),
        }
    }

    pub fn rad_part(&self, e: &Expansion) -> DVector<f64> {
        combine(&self.rad, &e.rad, self.ambient_dim())
    }

    pub fn ltr_part(&self, e: &Expansion) -> DVector<f64> {
        combine(&self.ltr, &e.ltr, self.ambient_dim())
    }

    pub fn screen_part(&self, e: &Expansion) -> DVector<f64> {
        combine(&self.stm, &e.screen, self.ambient_dim())
    }

    pub fn sperp_part(&self, e: &Expansion) -> DVector<f64> {
        combine(&self.stmperp, &e.sperp, self.ambient_dim())
    }

    /// Tangential part: radical + screen.
    pub fn tangent_part(&self, e: &Expansion) -> DVector<f64> {
        self.rad_part(e) + self.screen_part(e)
    }
}

fn combine(basis: &[DVector<f64>], coeffs: &[f64], dim: usize) -> DVector<f64> {
    let mut out = DVector::zeros(dim);
    for (c, b) in coeffs.iter().zip(basis) {
        out += b * *c;
    }
    out
}

pub fn decompose(spec: &ManifoldSpec, t: &[f64]) -> Result<Decomposition, DecompError> {
    let jet = spec.eval_jets(t)?;
    decompose_at(spec, t, &jet)
}

pub fn decompose_at(
    spec: &ManifoldSpec,
    t: &[f64],
    jet: &EmbeddingJet,
) -> Result<Decomposition, DecompError> {
    let metric = &spec.metric;
    let n = spec.ambient_dim;
    let tm = spec.tangent_frame(jet);
    let k = tm.len();
    let normed: Vec<DVector<f64>> = tm
        .iter()
        .map(|v| {
            let nrm = v.norm();
            if nrm > 0.0 { v / nrm } else { v.clone() }
        })
        .collect();
    let rank = numeric_rank(&matrix_from_columns(&normed, n));
    if rank < k {
        return Err(DecompError::RankDeficientFrame { rank, expected: k });
    }
    let (rad, rad_coeffs) = radical(metric, &tm);
    let r = rad.len();
    let (stm, stm_frame_indices) = screen_complement(metric, &rad, &tm, k - r)?;
    let tmperp = ambient_orthogonal(metric, &tm);
    let codim = n - k;
    let (stmperp, _) = screen_complement(metric, &rad, &tmperp, codim - r)?;
    let ltr = if r > 0 {
        lightlike_transversal(metric, &rad, &stm, &stmperp)?
    } else {
        Vec::new()
    };
    Ok(Decomposition {
        t: t.to_vec(),
        point: jet.point.clone(),
        tm,
        tmperp,
        rad,
        rad_coeffs,
        stm,
        stm_frame_indices,
        stmperp,
        ltr,
        classification: Classification::from_dims(r, k, codim),
    })
}

/// Screen genericity of the decomposition with respect to the bronze
/// structure: invariance of the radical, the split of the screen into the
/// bronze-invariant part B0 = J(S(TM)) cap S(TM) and its orthogonal
/// complement B', and the bronze-invariant remainder mu of S(TM^perp).
#[derive(Debug, Clone)]
pub struct ScreenGenericReport {
    pub b0: Vec<DVector<f64>>,
    pub bprime: Vec<DVector<f64>>,
    /// S(TM^perp)-components of J(B') (the image under the normal part of J).
    pub wbprime: Vec<DVector<f64>>,
    pub mu: Vec<DVector<f64>>,
    /// Relative distance of J(Rad) from Rad; ~0 when the radical is invariant.
    pub rad_invariant: f64,
    /// Relative distance of J(mu) from mu.
    pub mu_invariant: f64,
    /// Relative distance of J(ltr) from ltr.
    pub ltr_invariant: f64,
    /// Minimum |eigenvalue| of the B0 Gram (normalized); >0 when B0 is
    /// non-degenerate.
    pub b0_min_gram_eig: f64,
    /// Relative size of the part of J(B') outside S(TM); >0 when J(B') is not
    /// contained in the screen.
    pub jbprime_outside_stm: f64,
    /// Relative size of the part of J(B') outside S(TM^perp).
    pub jbprime_outside_stmperp: f64,
    pub screen_generic: bool,
    pub proper: bool,
}

fn relative_outside(
    metric_dim: usize,
    vectors: &[DVector<f64>],
    span: &[DVector<f64>],
) -> f64 {
    // max over `vectors` of the Euclidean distance to span, relative to norm.
    let mut worst = 0.0_f64;
    for v in vectors {
        if v.norm() == 0.0 {
            continue;
        }
        let dist = if span.is_empty() {
            v.norm()
        } else {
            let m = matrix_from_columns(span, metric_dim);
            let sol = m.clone().svd(true, true).solve(v, RANK_TOL).unwrap();
            (v - m * sol).norm()
        };
        worst = worst.max(dist / v.norm());
    }
    worst
}

pub fn screen_generic_report(
    spec: &ManifoldSpec,
    decomp: &Decomposition,
) -> ScreenGenericReport {
    let metric = &spec.metric;
    let j = &spec.bronze;
    let n = spec.ambient_dim;
    // J(Rad) vs Rad.
    let jrad: Vec<DVector<f64>> = decomp.rad.iter().map(|x| j.apply(x)).collect();
    let rad_invariant = relative_outside(n, &jrad, &decomp.rad);
    // B0 = J(S(TM)) cap S(TM): kernel of [J*S | -S] read through the S block.
    let p = decomp.stm.len();
    let smat = matrix_from_columns(&decomp.stm, n);
    let jsmat = &j.mat * &smat;
    let mut stacked = DMatrix::zeros(n, 2 * p);
    stacked.view_mut((0, 0), (n, p)).copy_from(&jsmat);
    stacked.view_mut((0, p), (n, p)).copy_from(&(-&smat));
    let kern = semilinalg::nullspace(&stacked);
    let mut b0_coeffs = DMatrix::zeros(p, kern.ncols());
    for c in 0..kern.ncols() {
        b0_coeffs.set_column(c, &kern.view((p, c), (p, 1)).column(0).into_owned());
    }
    let b0_coeffs = rref_canonicalize(&b0_coeffs);
    let b0: Vec<DVector<f64>> = (0..b0_coeffs.ncols())
        .map(|c| &smat * b0_coeffs.column(c).into_owned())
        .collect();
    let b0_gram = metric.gram(&b0);
    let b0_min_gram_eig = if b0.is_empty() {
        0.0
    } else {
        semilinalg::min_abs_eig(&b0_gram) / b0_gram.amax().max(1.0)
    };
    // B' = g-orthogonal complement of B0 inside S(TM).
    let bprime = if b0.is_empty() {
        decomp.stm.clone()
    } else {
        orthogonal_within(metric, &decomp.stm, &b0)
    };
    let jbprime: Vec<DVector<f64>> = bprime.iter().map(|x| j.apply(x)).collect();
    let jbprime_outside_stm = relative_outside(n, &jbprime, &decomp.stm);
    let jbprime_outside_stmperp = relative_outside(n, &jbprime, &decomp.stmperp);
    // w(B'): screen-normal components of J(B').
    let wbprime: Vec<DVector<f64>> = jbprime
        .iter()
        .map(|v| decomp.sperp_part(&decomp.expand(metric, v)))
        .collect();
    let wb_nonzero: Vec<DVector<f64>> = wbprime
        .iter()
        .filter(|v| v.norm() > RANK_TOL)
        .cloned()
        .collect();
    let mu = if wb_nonzero.is_empty() {
        decomp.stmperp.clone()
    } else {
        orthogonal_within(metric, &decomp.stmperp, &wb_nonzero)
    };
    let jmu: Vec<DVector<f64>> = mu.iter().map(|x| j.apply(x)).collect();
    let mu_invariant = relative_outside(n, &jmu, &mu);
    let jltr: Vec<DVector<f64>> = decomp.ltr.iter().map(|x| j.apply(x)).collect();
    let ltr_invariant = relative_outside(n, &jltr, &decomp.ltr);
    let tol = 1e-7;
    let screen_generic = rad_invariant < tol
        && b0_min_gram_eig > tol
        && (bprime.is_empty() || (jbprime_outside_stm > tol && jbprime_outside_stmperp > tol));
    let proper = !b0.is_empty() && !bprime.is_empty();
    ScreenGenericReport {
        b0,
        bprime,
        wbprime,
        mu,
        rad_invariant,
        mu_invariant,
        ltr_invariant,
        b0_min_gram_eig,
        jbprime_outside_stm,
        jbprime_outside_stmperp,
        screen_generic,
        proper,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprdsl::parse_expression;
    use nalgebra::DMatrix;

    fn simple_spec(
        exprs: &[&str],
        param_dim: usize,
        timelike: &[usize],
        domain: (f64, f64),
    ) -> ManifoldSpec {
        let ambient_dim = exprs.len();
        let embedding = exprs
            .iter()
            .map(|e| parse_expression(e, param_dim).unwrap())
            .collect();
        ManifoldSpec {
            param_dim,
            ambient_dim,
            metric: SignatureMetric::new(ambient_dim, timelike),
            embedding,
            bronze: BronzeStructure::new(
                DMatrix::identity(ambient_dim, ambient_dim) * crate::exprdsl::sigma(),
            ),
            lm: LMParams {
                l: 1.0,
                m: 0.0,
                eta: DVector::from_fn(ambient_dim, |i, _| if i == ambient_dim - 1 { 1.0 } else { 0.0 }),
            },
            frame: None,
            domain: vec![domain; param_dim],
        }
    }

    #[test]
    fn null_cone_surface_is_1_lightlike() {
        // Graph of the null cone t1 = sqrt(x^2+y^2) parametrized away from the
        // apex: F(u,v) = (u*cosh(v)... keep it simple: null plane in R^4_1.
        let spec = simple_spec(&["t1", "t1", "t2", "0"], 2, &[0], (0.5, 1.5));
        let d = decompose(&spec, &[1.0, 0.3]).unwrap();
        assert_eq!(d.rad_dim(), 1);
        assert_eq!(d.classification, Classification::RLightlike(1));
        assert_eq!(d.classification.label(), "1-lightlike");
        assert_eq!(d.stm.len(), 1);
        assert_eq!(d.stmperp.len(), 1);
        assert_eq!(d.ltr.len(), 1);
        // Transversal pairing.
        let g = &spec.metric;
        assert!((g.inner(&d.ltr[0], &d.rad[0]) - 1.0).abs() < 1e-10);
        assert!(g.inner(&d.ltr[0], &d.ltr[0]).abs() < 1e-10);
        assert!(g.inner(&d.ltr[0], &d.stm[0]).abs() < 1e-10);
        assert!(g.inner(&d.ltr[0], &d.stmperp[0]).abs() < 1e-10);
    }

    #[test]
    fn isotropic_null_curve() {
        // F(t) = (t, t, 0) in R^3_1: r = m = 1 < n = 2.
        let spec = simple_spec(&["t1", "t1", "0"], 1, &[0], (0.5, 1.5));
        let d = decompose(&spec, &[1.0]).unwrap();
        assert_eq!(d.classification, Classification::Isotropic);
    }

    #[test]
    fn coisotropic_hypersurface() {
        // Null hyperplane slice in R^3_1: F(u,v) = (u, u, v): r = 1 = codim < dim 2.
        let spec = simple_spec(&["t1", "t1", "t2"], 2, &[0], (0.5, 1.5));
        let d = decompose(&spec, &[1.0, 0.2]).unwrap();
        assert_eq!(d.classification, Classification::Coisotropic);
        assert!(d.stmperp.is_empty());
    }

    #[test]
    fn totally_lightlike_plane() {
        // F(u,v) = (u, u, v, v) in R^4_2: r = m = n = 2.
        let spec = simple_spec(&["t1", "t1", "t2", "t2"], 2, &[0, 2], (0.5, 1.5));
        let d = decompose(&spec, &[1.0, 0.2]).unwrap();
        assert_eq!(d.classification, Classification::TotallyLightlike);
    }

    #[test]
    fn nondegenerate_sphere_patch() {
        let spec = simple_spec(
            &["cos(t1)*cos(t2)", "cos(t1)*sin(t2)", "sin(t1)"],
            2,
            &[],
            (0.2, 1.2),
        );
        let d = decompose(&spec, &[0.5, 0.7]).unwrap();
        assert_eq!(d.classification, Classification::NonDegenerate);
        assert_eq!(d.rad_dim(), 0);
        assert!(d.ltr.is_empty());
    }

    #[test]
    fn expansion_roundtrip() {
        let spec = simple_spec(&["t1", "t1", "t2", "0"], 2, &[0], (0.5, 1.5));
        let d = decompose(&spec, &[1.0, 0.3]).unwrap();
        let v = DVector::from_row_slice(&[0.7, -1.1, 2.2, 0.4]);
        let e = d.expand(&spec.metric, &v);
        assert!(e.residual < 1e-10);
        let recon = d.rad_part(&e) + d.ltr_part(&e) + d.screen_part(&e) + d.sperp_part(&e);
        assert!((v - recon).norm() < 1e-10);
    }

    #[test]
    fn frame_derivative_matches_hessian() {
        // F(t) = (t1^2, t1*t2, t2^2): D_{B1} B2 should be d^2F/dt1 dt2.
        let spec = simple_spec(&["t1^2", "t1*t2", "t2^2"], 2, &[], (0.5, 1.5));
        let jet = spec.eval_jets(&[1.0, 2.0]).unwrap();
        let d12 = spec.frame_derivative(&jet, 0, 1);
        assert!((d12[0] - 0.0).abs() < 1e-14);
        assert!((d12[1] - 1.0).abs() < 1e-14);
        assert!((d12[2] - 0.0).abs() < 1e-14);
        let d11 = spec.frame_derivative(&jet, 0, 0);
        assert!((d11[0] - 2.0).abs() < 1e-14);
    }
}

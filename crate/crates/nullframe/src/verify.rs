//! Structural verification: every identity of the induced-connection family,
//! distribution integrability and geodesicity conditions, umbilical and
//! minimality checks, all evaluated as quantitative residuals at sample
//! points, plus the two built-in example manifolds.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};

use crate::connection::{levi_civita_bundle, lm_bundle, ConnError, LcBundle, LmBundle, PointContext};
use crate::exprdsl::parse_expression;
use crate::manifest::{load_manifest, LoadedManifest, ManifestError};
use crate::semilinalg::{matrix_from_columns, SignatureMetric};
use crate::structure::{BronzeStructure, LMParams};
use crate::submanifold::{screen_generic_report, Decomposition, ManifoldSpec, ScreenGenericReport};

/// Named residuals accumulated across points (max per name), with notes on
/// checks that were skipped because the geometry does not support them.
#[derive(Debug, Clone, Default)]
pub struct Ledger {
    pub entries: BTreeMap<String, f64>,
    pub skipped: BTreeSet<String>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bump(&mut self, key: &str, value: f64) {
        let e = self.entries.entry(key.to_string()).or_insert(0.0);
        if value > *e {
            *e = value;
        }
    }

    pub fn skip(&mut self, key: &str, reason: &str) {
        self.skipped.insert(format!("{key}: {reason}"));
    }

    pub fn merge(&mut self, other: &Ledger) {
        for (k, v) in &other.entries {
            self.bump(k, *v);
        }
        self.skipped.extend(other.skipped.iter().cloned());
    }

    pub fn max_entry(&self) -> Option<(&str, f64)> {
        self.entries
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, v)| (k.as_str(), *v))
    }
}

/// A base point prepared for identity evaluation: finite-difference context
/// plus the full Levi-Civita split bundle.
pub struct PointVerifier<'a> {
    pub ctx: PointContext<'a>,
    pub lc: LcBundle,
}

/// Norm of the Euclidean component of `v` inside span(`basis`).
fn component_in(basis: &[DVector<f64>], v: &DVector<f64>) -> f64 {
    if basis.is_empty() {
        return 0.0;
    }
    let m = matrix_from_columns(basis, v.len());
    let svd = m.clone().svd(true, true);
    match svd.solve(v, 1e-12) {
        Ok(c) => (m * c).norm(),
        Err(_) => 0.0,
    }
}

/// Norm of the Euclidean component of `v` outside span(`basis`).
fn component_outside(basis: &[DVector<f64>], v: &DVector<f64>) -> f64 {
    if basis.is_empty() {
        return v.norm();
    }
    let m = matrix_from_columns(basis, v.len());
    let svd = m.clone().svd(true, true);
    match svd.solve(v, 1e-12) {
        Ok(c) => (v - m * c).norm(),
        Err(_) => v.norm(),
    }
}

impl<'a> PointVerifier<'a> {
    pub fn new(spec: &'a ManifoldSpec, t: &[f64]) -> Result<Self, ConnError> {
        let ctx = PointContext::new(spec, t)?;
        let lc = levi_civita_bundle(&ctx);
        Ok(PointVerifier { ctx, lc })
    }

    fn g(&self) -> &SignatureMetric {
        &self.ctx.spec.metric
    }

    /// Coefficients of a tangent vector over the working frame (Euclidean
    /// least squares; exact because the frame has full column rank).
    pub fn tangent_coeffs(&self, v: &DVector<f64>) -> Vec<f64> {
        let d = &self.ctx.decomp;
        let m = matrix_from_columns(&d.tm, v.len());
        let svd = m.svd(true, true);
        let c = svd.solve(v, 1e-12).expect("tangent frame has full rank");
        c.iter().cloned().collect()
    }

    /// Bilinear evaluation of a frame-pair grid at arbitrary tangent args.
    fn contract2(&self, grid: &[Vec<DVector<f64>>], xc: &[f64], yc: &[f64]) -> DVector<f64> {
        let n = self.ctx.spec.ambient_dim;
        let mut out = DVector::zeros(n);
        for (a, &ca) in xc.iter().enumerate() {
            if ca == 0.0 {
                continue;
            }
            for (b, &cb) in yc.iter().enumerate() {
                if cb != 0.0 {
                    out += &grid[a][b] * (ca * cb);
                }
            }
        }
        out
    }

    /// Contraction of an operator grid indexed [section][frame]: coefficients
    /// over the section basis and over the frame.
    fn contract_op(&self, grid: &[Vec<DVector<f64>>], sc: &[f64], xc: &[f64]) -> DVector<f64> {
        let n = self.ctx.spec.ambient_dim;
        let mut out = DVector::zeros(n);
        for (i, &ci) in sc.iter().enumerate() {
            if ci == 0.0 {
                continue;
            }
            for (a, &ca) in xc.iter().enumerate() {
                if ca != 0.0 {
                    out += &grid[i][a] * (ci * ca);
                }
            }
        }
        out
    }

    /// Structure-applied-to-screen contraction: value of the screen second
    /// fundamental form at (X, S) with S expanded over the screen basis.
    fn rad_form(&self, grid: &[Vec<DVector<f64>>], xc: &[f64], s: &DVector<f64>) -> DVector<f64> {
        let d = &self.ctx.decomp;
        let e = d.expand(self.g(), s);
        let n = self.ctx.spec.ambient_dim;
        let mut out = DVector::zeros(n);
        for (p, &cp) in e.screen.iter().enumerate() {
            if cp == 0.0 {
                continue;
            }
            let b = d.stm_frame_indices[p];
            for (a, &ca) in xc.iter().enumerate() {
                if ca != 0.0 {
                    out += &grid[a][b] * (cp * ca);
                }
            }
        }
        out
    }

    /// Identities of the Levi-Civita-induced objects: the Gauss/Weingarten
    /// pairing relations, symmetry of the second fundamental forms, the
    /// non-metricity formula for the induced connection, and vanishing of
    /// the lightlike form and shape operator on radical arguments.
    pub fn lc_identities(&self, led: &mut Ledger) {
        let d = &self.ctx.decomp;
        let g = self.g();
        let lc = &self.lc;
        let k = self.ctx.frame_dim();
        let r = d.rad.len();
        let s = d.stmperp.len();

        for a in 0..k {
            for b in 0..k {
                let recon = &lc.nabla[a][b] + &lc.hl[a][b] + &lc.hs[a][b];
                led.bump("gauss_split", (&lc.nabla_bar[a][b] - recon).norm());
                led.bump("hl_symmetry", (&lc.hl[a][b] - &lc.hl[b][a]).norm());
                led.bump("hs_symmetry", (&lc.hs[a][b] - &lc.hs[b][a]).norm());
                for j in 0..s {
                    let w = &d.stmperp[j];
                    let lhs = g.inner(&lc.hs[a][b], w) + g.inner(&d.tm[b], &lc.d_l[j][a]);
                    let rhs = g.inner(&lc.a_w[j][a], &d.tm[b]);
                    led.bump("i4", (lhs - rhs).abs());
                }
                for i in 0..r {
                    led.bump(
                        "i8",
                        (g.inner(&lc.hl_jb[a][b], &d.rad[i])
                            - g.inner(&lc.a_star[i][a], &lc.jb[b]))
                        .abs(),
                    );
                    led.bump(
                        "i9",
                        (g.inner(&lc.h_star[a][b], &d.ltr[i])
                            - g.inner(&lc.a_n[i][a], &lc.jb[b]))
                        .abs(),
                    );
                }
            }
        }
        for i in 0..r {
            for a in 0..k {
                for j in 0..s {
                    led.bump(
                        "i5",
                        (g.inner(&lc.d_s[i][a], &d.stmperp[j])
                            - g.inner(&lc.a_w[j][a], &d.ltr[i]))
                        .abs(),
                    );
                }
                led.bump("i10_hl_xi", lc.hl_xi[i][a].norm());
            }
            // Shape operator of xi applied to radical arguments vanishes.
            for p in 0..r {
                let mut v = DVector::zeros(self.ctx.spec.ambient_dim);
                for c in 0..k {
                    v += &lc.a_star[i][c] * d.rad_coeffs[(c, p)];
                }
                led.bump("i10_astar_xi", v.norm());
            }
        }
        if r == 0 {
            for key in ["i5", "i8", "i9", "i10_hl_xi", "i10_astar_xi"] {
                led.skip(key, "no radical (non-degenerate point)");
            }
        }
        // Non-metricity of the induced connection against the lightlike form.
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    let xg = self
                        .ctx
                        .fd_scalar(a, |dd| g.inner(&dd.tm[b], &dd.tm[c]));
                    let lhs = xg
                        - g.inner(&lc.nabla[a][b], &d.tm[c])
                        - g.inner(&d.tm[b], &lc.nabla[a][c]);
                    let rhs = g.inner(&lc.hl[a][b], &d.tm[c]) + g.inner(&lc.hl[a][c], &d.tm[b]);
                    led.bump("i11", (lhs - rhs).abs());
                }
            }
        }
    }

    /// Identities of the whole (l,m)-family: the dual-route split residuals
    /// plus torsion, non-metricity, structure-covariance, and every pairing
    /// relation of the barred objects.
    pub fn lm_identities(&self, lm: &LMParams, led: &mut Ledger) -> LmBundle {
        let bundle = lm_bundle(&self.ctx, &self.lc, lm);
        self.lm_identities_with(&bundle, led);
        bundle
    }

    pub fn lm_identities_with(&self, mb: &LmBundle, led: &mut Ledger) {
        let d = &self.ctx.decomp;
        let g = self.g();
        let j = &self.ctx.spec.bronze;
        let lc = &self.lc;
        let lm = &mb.lm;
        let k = self.ctx.frame_dim();
        let r = d.rad.len();
        let s = d.stmperp.len();
        let th = |v: &DVector<f64>| lm.theta(g, v);

        for (key, v) in &mb.route_residuals {
            led.bump(key, *v);
        }

        let jt: Vec<DVector<f64>> = (0..k).map(|a| j.apply(&d.tm[a])).collect();
        let tht: Vec<f64> = (0..k).map(|a| th(&d.tm[a])).collect();
        let thj: Vec<f64> = (0..k).map(|a| th(&jt[a])).collect();

        for a in 0..k {
            for b in 0..k {
                // Torsion of the ambient family (frame fields commute).
                let tor = &mb.omega_raw[a][b] - &mb.omega_raw[b][a];
                let tor_rhs = (&d.tm[a] * tht[b] - &d.tm[b] * tht[a]) * lm.l
                    + (&jt[a] * tht[b] - &jt[b] * tht[a]) * lm.m;
                led.bump("e3", (tor - tor_rhs).norm());
                // Torsion of the induced connection.
                let tor_i = &mb.omega[a][b] - &mb.omega[b][a];
                let tor_i_rhs = (&d.tm[a] * tht[b] - &d.tm[b] * tht[a]) * lm.l
                    + (&mb.f[a] * tht[b] - &mb.f[b] * tht[a]) * lm.m;
                led.bump("e19", (tor_i - tor_i_rhs).norm());
                // Structure covariance: the connection applied across the
                // bronze structure (the ambient derivative of J Y is exact
                // because the structure matrix is constant).
                let lhs = j.apply(&lc.nabla_bar[a][b])
                    + (&d.tm[a] * lm.l + &jt[a] * lm.m) * thj[b];
                let rhs = j.apply(&mb.omega_raw[a][b])
                    + (&d.tm[a] * thj[b] - &jt[a] * tht[b]) * lm.l
                    + (&jt[a] * thj[b] - &jt[a] * (3.0 * tht[b]) - &d.tm[a] * tht[b]) * lm.m;
                let res = (lhs - rhs).norm();
                led.bump("e4", res);
                led.bump("e5", res);
                for c in 0..k {
                    let xg = self
                        .ctx
                        .fd_scalar(a, |dd| g.inner(&dd.tm[b], &dd.tm[c]));
                    let g_ab = g.inner(&d.tm[a], &d.tm[b]);
                    let g_ac = g.inner(&d.tm[a], &d.tm[c]);
                    // Ambient non-metricity.
                    let lhs2 = xg
                        - g.inner(&mb.omega_raw[a][b], &d.tm[c])
                        - g.inner(&d.tm[b], &mb.omega_raw[a][c]);
                    let rhs2 = -lm.l * (tht[b] * g_ac + tht[c] * g_ab)
                        - lm.m
                            * (tht[b] * g.inner(&jt[a], &d.tm[c])
                                + tht[c] * g.inner(&jt[a], &d.tm[b]));
                    led.bump("e2", (lhs2 - rhs2).abs());
                    // Induced non-metricity, in terms of the unbarred and the
                    // barred lightlike forms respectively.
                    let lhs3 = xg
                        - g.inner(&mb.omega[a][b], &d.tm[c])
                        - g.inner(&d.tm[b], &mb.omega[a][c]);
                    let rhs18a = g.inner(&lc.hl[a][b], &d.tm[c])
                        + g.inner(&lc.hl[a][c], &d.tm[b])
                        - lm.l * (tht[b] * g_ac + tht[c] * g_ab)
                        - lm.m
                            * (tht[b] * g.inner(&mb.f[a], &d.tm[c])
                                + tht[c] * g.inner(&mb.f[a], &d.tm[b]));
                    led.bump("e18a", (lhs3 - rhs18a).abs());
                    let rhs18b = g.inner(&mb.bar_hl[a][b], &d.tm[c])
                        + g.inner(&mb.bar_hl[a][c], &d.tm[b])
                        - lm.l * (tht[b] * g_ac + tht[c] * g_ab)
                        - lm.m
                            * (tht[b] * g.inner(&jt[a], &d.tm[c])
                                + tht[c] * g.inner(&jt[a], &d.tm[b]));
                    led.bump("e18b", (lhs3 - rhs18b).abs());
                }
                for jx in 0..s {
                    let w = &d.stmperp[jx];
                    let thw = th(w);
                    let lhs4 = g.inner(&mb.bar_hs[a][b], w)
                        + g.inner(&d.tm[b], &mb.bar_d_l[jx][a]);
                    let rhs4 = g.inner(&mb.bar_a_w[jx][a], &d.tm[b])
                        + lm.l * thw * g.inner(&d.tm[a], &d.tm[b])
                        + lm.m * thw * g.inner(&mb.f[a], &d.tm[b])
                        + lm.m * tht[b] * g.inner(&mb.ws[a], w)
                        + lm.m * thw * g.inner(&d.tm[b], &mb.wl[a]);
                    led.bump("e20", (lhs4 - rhs4).abs());
                }
                for i in 0..r {
                    let xi = &d.rad[i];
                    let thxi = th(xi);
                    let jb_b = &lc.jb[b];
                    let lhs5 = g.inner(&mb.bar_hl_jb[a][b], xi);
                    let rhs5 = g.inner(&mb.bar_a_star[i][a], jb_b)
                        + lm.l * thxi * g.inner(&self.jproj(&d.tm[a]), jb_b)
                        + lm.m * thxi * g.inner(&self.jproj(&mb.f[a]), jb_b)
                        + lm.m * th(jb_b) * g.inner(&mb.wl[a], xi);
                    led.bump("e28", (lhs5 - rhs5).abs());
                    let nn = &d.ltr[i];
                    let thn = th(nn);
                    let eta_x = g.inner(&d.tm[a], nn);
                    let eta_fx = g.inner(&mb.f[a], nn);
                    let lhs6 = g.inner(&mb.bar_h_star[a][b], nn);
                    let rhs6 = g.inner(&mb.bar_a_n[i][a], jb_b)
                        + lm.l * thn * g.inner(&d.tm[a], jb_b)
                        + lm.l * th(jb_b) * eta_x
                        + lm.m * thn * g.inner(&mb.f[a], jb_b)
                        + lm.m * th(jb_b) * eta_fx;
                    led.bump("e29", (lhs6 - rhs6).abs());
                }
            }
        }

        for i in 0..r {
            let thxi = th(&d.rad[i]);
            for a in 0..k {
                for jx in 0..s {
                    let w = &d.stmperp[jx];
                    let thw = th(w);
                    let lhs = g.inner(&mb.bar_d_s[i][a], w);
                    let rhs = g.inner(&mb.bar_a_w[jx][a], &d.ltr[i])
                        + lm.l * thw * g.inner(&d.tm[a], &d.ltr[i])
                        + lm.m * thw * g.inner(&mb.f[a], &d.ltr[i])
                        + lm.m * th(&d.ltr[i]) * g.inner(&mb.ws[a], w);
                    led.bump("e21", (lhs - rhs).abs());
                }
            }
            // Barred lightlike form on radical arguments.  The pairing with
            // the radical determines the transversal value completely, so
            // the vector-level residual is equivalent to the pairings.
            for a in 0..k {
                led.bump(
                    "e30",
                    (&mb.bar_hl_xi[i][a] - &(&mb.wl[a] * (lm.m * thxi))).norm(),
                );
            }
            // Barred shape operator of xi on radical arguments.
            for p in 0..r {
                let k_dim = self.ctx.frame_dim();
                let mut v = DVector::zeros(self.ctx.spec.ambient_dim);
                for c in 0..k_dim {
                    v += &mb.bar_a_star[i][c] * d.rad_coeffs[(c, p)];
                }
                let mut xi_p_f = DVector::zeros(self.ctx.spec.ambient_dim);
                let jxi = j.apply(&d.rad[p]);
                let e = d.expand(g, &jxi);
                xi_p_f += d.tangent_part(&e);
                let corr = self.jproj(&d.rad[p]) * (lm.l * thxi)
                    + self.jproj(&xi_p_f) * (lm.m * thxi);
                led.bump("e31", (v + corr).norm());
            }
        }
        if r == 0 {
            for key in ["e21", "e28", "e29", "e30", "e31"] {
                led.skip(key, "no radical (non-degenerate point)");
            }
        }
    }

    /// Screen projection of an arbitrary tangent vector.
    fn jproj(&self, v: &DVector<f64>) -> DVector<f64> {
        let d = &self.ctx.decomp;
        let mut out = v.clone();
        for i in 0..d.rad.len() {
            out -= &d.rad[i] * self.g().inner(v, &d.ltr[i]);
        }
        out
    }
}

/// Run the full identity suite at the given points: the Levi-Civita
/// identities once per point, the (l,m)-family per supplied parameter pair.
pub fn identity_suite(
    spec: &ManifoldSpec,
    points: &[Vec<f64>],
    lms: &[LMParams],
) -> Result<Ledger, ConnError> {
    let mut led = Ledger::new();
    for t in points {
        let pv = PointVerifier::new(spec, t)?;
        pv.lc_identities(&mut led);
        for lm in lms {
            pv.lm_identities(lm, &mut led);
        }
    }
    Ok(led)
}

/// Minimality: the screen-normal form vanishes on radical arguments and the
/// trace of the full second fundamental form over the screen vanishes.  Two
/// trace conventions are reported: the plain sum over the declared screen
/// frame, and the basis-independent inverse-Gram trace.  The verdict uses
/// the frame trace; see the README for why the two can disagree.
#[derive(Debug, Clone)]
pub struct MinimalityReport {
    pub hs_on_rad_residual: f64,
    pub frame_trace_residual: f64,
    pub inverse_gram_trace_residual: f64,
    pub minimal: bool,
}

pub fn minimality_check(pv: &PointVerifier, tol: f64) -> MinimalityReport {
    let d = &pv.ctx.decomp;
    let lc = &pv.lc;
    let g = pv.g();
    let k = pv.ctx.frame_dim();
    let mut hs_on_rad: f64 = 0.0;
    for i in 0..d.rad.len() {
        for a in 0..k {
            hs_on_rad = hs_on_rad.max(lc.hs_xi[i][a].norm());
        }
    }
    let idx = &d.stm_frame_indices;
    let p = idx.len();
    let n = pv.ctx.spec.ambient_dim;
    let mut frame_trace = DVector::zeros(n);
    for &b in idx {
        frame_trace += &lc.hl[b][b] + &lc.hs[b][b];
    }
    let gram = g.gram(&d.stm);
    let mut ig_trace = DVector::zeros(n);
    if p > 0 {
        if let Some(inv) = gram.clone().try_inverse() {
            for a in 0..p {
                for b in 0..p {
                    ig_trace +=
                        &(&lc.hl[idx[a]][idx[b]] + &lc.hs[idx[a]][idx[b]]) * inv[(a, b)];
                }
            }
        }
    }
    let frame_trace_residual = frame_trace.norm();
    MinimalityReport {
        hs_on_rad_residual: hs_on_rad,
        frame_trace_residual,
        inverse_gram_trace_residual: ig_trace.norm(),
        minimal: hs_on_rad < tol && frame_trace_residual < tol,
    }
}

/// Least-squares fit of the umbilical model h = H g over the screen, with
/// residuals evaluated over all frame pairs (radical pairs included, where
/// g vanishes and h must too).
#[derive(Debug, Clone)]
pub struct UmbilicalReport {
    pub hl_residual: f64,
    pub hs_residual: f64,
    pub dl_residual: f64,
    pub mean_curvature_norm: f64,
    /// Euclidean norm of the component of H^s inside the invariant
    /// screen-normal subspace, when that subspace is supplied.
    pub hs_mu_component: Option<f64>,
    pub umbilical: bool,
}

pub fn umbilical_fit(
    pv: &PointVerifier,
    mb: &LmBundle,
    mu: Option<&[DVector<f64>]>,
    tol: f64,
) -> UmbilicalReport {
    let d = &pv.ctx.decomp;
    let g = pv.g();
    let k = pv.ctx.frame_dim();
    let n = pv.ctx.spec.ambient_dim;
    let idx = &d.stm_frame_indices;
    let p = idx.len();
    // Signature-aware orthonormalization of the screen.
    let gram = g.gram(&d.stm);
    let eig = gram.symmetric_eigen();
    let mut hl_fit = DVector::zeros(n);
    let mut hs_fit = DVector::zeros(n);
    for a in 0..p {
        let lam = eig.eigenvalues[a];
        let eps = lam.signum();
        // h(e_a, e_a) with e_a = sum_q Q[q][a] s_q / sqrt|lam|.
        let mut hl_aa = DVector::zeros(n);
        let mut hs_aa = DVector::zeros(n);
        for q1 in 0..p {
            for q2 in 0..p {
                let w = eig.eigenvectors[(q1, a)] * eig.eigenvectors[(q2, a)] / lam.abs();
                hl_aa += &mb.bar_hl[idx[q1]][idx[q2]] * w;
                hs_aa += &mb.bar_hs[idx[q1]][idx[q2]] * w;
            }
        }
        hl_fit += hl_aa * (eps / p as f64);
        hs_fit += hs_aa * (eps / p as f64);
    }
    let mut hl_res: f64 = 0.0;
    let mut hs_res: f64 = 0.0;
    for a in 0..k {
        for b in 0..k {
            let gab = g.inner(&d.tm[a], &d.tm[b]);
            hl_res = hl_res.max((&mb.bar_hl[a][b] - &hl_fit * gab).norm());
            hs_res = hs_res.max((&mb.bar_hs[a][b] - &hs_fit * gab).norm());
        }
    }
    let mut dl_res: f64 = 0.0;
    for row in &mb.bar_d_l {
        for v in row {
            dl_res = dl_res.max(v.norm());
        }
    }
    let hs_mu_component = mu.map(|basis| component_in(basis, &hs_fit));
    UmbilicalReport {
        hl_residual: hl_res,
        hs_residual: hs_res,
        dl_residual: dl_res,
        mean_curvature_norm: (&hl_fit + &hs_fit).norm(),
        hs_mu_component,
        umbilical: hl_res < tol && hs_res < tol && dl_res < tol,
    }
}

/// A section-valued field known at the center point and at all the
/// finite-difference samples of the context.
struct FieldTable {
    center: Vec<DVector<f64>>,
    axis: Vec<[Vec<DVector<f64>>; 4]>,
}

impl FieldTable {
    fn build_many<F>(ctx: &PointContext, count: usize, f: F) -> Vec<FieldTable>
    where
        F: Fn(&Decomposition) -> Vec<Vec<DVector<f64>>>,
    {
        let k = ctx.frame_dim();
        let centers = f(&ctx.decomp);
        assert_eq!(centers.len(), count);
        let mut tables: Vec<FieldTable> = centers
            .into_iter()
            .map(|center| FieldTable {
                center,
                axis: Vec::with_capacity(k),
            })
            .collect();
        for a in 0..k {
            let samples = ctx.axis_samples(a);
            let mut per_sample: Vec<Vec<Vec<DVector<f64>>>> = Vec::with_capacity(4);
            for s in samples {
                per_sample.push(f(s));
            }
            for (ti, table) in tables.iter_mut().enumerate() {
                table.axis.push([
                    per_sample[0][ti].clone(),
                    per_sample[1][ti].clone(),
                    per_sample[2][ti].clone(),
                    per_sample[3][ti].clone(),
                ]);
            }
        }
        tables
    }

    /// Ambient derivative of member `j` along frame direction `a` (central
    /// difference with one Richardson halving, same stencil as the context).
    fn deriv(&self, ctx: &PointContext, a: usize, j: usize) -> DVector<f64> {
        let [plus, minus, half_plus, half_minus] = &self.axis[a];
        let d_h = (&plus[j] - &minus[j]) / (2.0 * ctx.h);
        let d_h2 = (&half_plus[j] - &half_minus[j]) / ctx.h;
        (d_h2 * 4.0 - d_h) / 3.0
    }

    /// Derivative along an arbitrary tangent direction given by frame
    /// coefficients.
    fn dir_deriv(&self, ctx: &PointContext, xc: &[f64], j: usize) -> DVector<f64> {
        let n = self.center[j].len();
        let mut out = DVector::zeros(n);
        for (a, &c) in xc.iter().enumerate() {
            if c != 0.0 {
                out += self.deriv(ctx, a, j) * c;
            }
        }
        out
    }
}

/// Integrability and geodesicity of the structure-adapted distributions:
/// bracket-closure residuals computed directly from derivative fields, side
/// by side with the equivalent pairing conditions, plus the B-geodesic and
/// mixed-geodesic residuals and their characterizations.
pub fn distribution_checks(spec: &ManifoldSpec, t: &[f64]) -> Result<Ledger, ConnError> {
    let pv = PointVerifier::new(spec, t)?;
    let mut led = Ledger::new();
    let mb = lm_bundle(&pv.ctx, &pv.lc, &spec.lm);
    let report = screen_generic_report(spec, &pv.ctx.decomp);
    distribution_checks_with(&pv, &mb, &report, &mut led);
    Ok(led)
}

pub fn distribution_checks_with(
    pv: &PointVerifier,
    mb: &LmBundle,
    report: &ScreenGenericReport,
    led: &mut Ledger,
) {
    let ctx = &pv.ctx;
    let spec = ctx.spec;
    let g = &spec.metric;
    let j = &spec.bronze;
    let d = &ctx.decomp;
    let lm = &mb.lm;
    let r = d.rad.len();
    let th = |v: &DVector<f64>| lm.theta(g, v);

    if r == 0 || report.b0.is_empty() || report.bprime.is_empty() {
        led.skip(
            "distributions",
            "not a proper screen generic point (empty radical, invariant part, \
             or anti-invariant part)",
        );
        return;
    }

    // Basis fields of the invariant screen part, the anti-invariant part,
    // and the radical at the center and at every stencil sample.
    let tables = FieldTable::build_many(ctx, 3, |dd| {
        let rep = screen_generic_report(spec, dd);
        vec![rep.b0, rep.bprime, dd.rad.clone()]
    });
    let (b0_tab, bp_tab, rad_tab) = (&tables[0], &tables[1], &tables[2]);
    let nb0 = b0_tab.center.len();
    let nbp = bp_tab.center.len();
    if b0_tab.axis.iter().any(|ax| {
        ax.iter().any(|s| s.len() != nb0)
    }) || bp_tab.axis.iter().any(|ax| ax.iter().any(|s| s.len() != nbp))
    {
        led.skip("distributions", "distribution dimension changed across stencil");
        return;
    }

    let coeffs_b0: Vec<Vec<f64>> = b0_tab.center.iter().map(|v| pv.tangent_coeffs(v)).collect();
    let coeffs_bp: Vec<Vec<f64>> = bp_tab.center.iter().map(|v| pv.tangent_coeffs(v)).collect();
    let coeffs_rad: Vec<Vec<f64>> = rad_tab.center.iter().map(|v| pv.tangent_coeffs(v)).collect();

    // Connection applied to a tabulated field: ambient derivative plus the
    // theta correction, split at the center.
    let omega_of = |tab: &FieldTable, xc: &[f64], x_center: &DVector<f64>, jj: usize| {
        let raw = tab.dir_deriv(ctx, xc, jj)
            + lm.correction(g, j, x_center, &tab.center[jj]);
        d.expand(g, &raw)
    };
    // Bracket of two tabulated fields (the flat ambient connection is
    // torsion-free, so the bracket is the antisymmetrized derivative).
    let bracket = |tab_x: &FieldTable,
                   xc: &[f64],
                   ix: usize,
                   tab_y: &FieldTable,
                   yc: &[f64],
                   iy: usize| {
        tab_y.dir_deriv(ctx, xc, iy) - tab_x.dir_deriv(ctx, yc, ix)
    };

    // Span bases for closure tests.
    let b_span: Vec<DVector<f64>> = d
        .rad
        .iter()
        .chain(b0_tab.center.iter())
        .cloned()
        .collect();

    // --- Invariant part B0: closure and both pairing conditions.
    for x in 0..nb0 {
        for y in 0..nb0 {
            if x == y {
                continue;
            }
            let br = bracket(b0_tab, &coeffs_b0[x], x, b0_tab, &coeffs_b0[y], y);
            led.bump("b0_closure", component_outside(&b0_tab.center, &br));

            let jx_v = j.apply(&b0_tab.center[x]);
            let jy_v = j.apply(&b0_tab.center[y]);
            // Screen second fundamental form values (tensorial in both args).
            let hst_x_jy = pv.rad_form(&mb.bar_h_star, &coeffs_b0[x], &jy_v);
            let hst_y_jx = pv.rad_form(&mb.bar_h_star, &coeffs_b0[y], &jx_v);
            for i in 0..r {
                let nn = &d.ltr[i];
                let jn = j.apply(nn);
                let lhs = g.inner(&hst_x_jy, &jn) + 3.0 * g.inner(&hst_y_jx, nn);
                let rhs = g.inner(&hst_y_jx, &jn) + 3.0 * g.inner(&hst_x_jy, nn);
                led.bump("b0_cond_i", (lhs - rhs).abs());
            }
            // Screen-connection values on the structure images (fields).
            let jb0 = FieldTable {
                center: b0_tab.center.iter().map(|v| j.apply(v)).collect(),
                axis: b0_tab
                    .axis
                    .iter()
                    .map(|ax| {
                        [
                            ax[0].iter().map(|v| j.apply(v)).collect(),
                            ax[1].iter().map(|v| j.apply(v)).collect(),
                            ax[2].iter().map(|v| j.apply(v)).collect(),
                            ax[3].iter().map(|v| j.apply(v)).collect(),
                        ]
                    })
                    .collect(),
            };
            let e_xy = omega_of(&jb0, &coeffs_b0[x], &b0_tab.center[x], y);
            let e_yx = omega_of(&jb0, &coeffs_b0[y], &b0_tab.center[y], x);
            let om_star_x_jy = d.screen_part(&e_xy);
            let om_star_y_jx = d.screen_part(&e_yx);
            let hs_x_jy = pv.contract2(&mb.bar_hs, &coeffs_b0[x], &pv.tangent_coeffs(&jy_v));
            let hs_y_jx = pv.contract2(&mb.bar_hs, &coeffs_b0[y], &pv.tangent_coeffs(&jx_v));
            for z in 0..nbp {
                let zv = &bp_tab.center[z];
                let jz = j.apply(zv);
                let fz = d.tangent_part(&d.expand(g, &jz));
                let lhs = g.inner(&om_star_x_jy, &fz)
                    + g.inner(&hs_x_jy, &jz)
                    + 3.0 * g.inner(&om_star_y_jx, zv);
                let rhs = g.inner(&om_star_y_jx, &fz)
                    + g.inner(&hs_y_jx, &jz)
                    + 3.0 * g.inner(&om_star_x_jy, zv);
                led.bump("b0_cond_ii", (lhs - rhs).abs());
            }
            // --- Full invariant tangent part B = Rad + B0 handled below.
            let om_x_jy = d.tangent_part(&e_xy);
            let om_y_jx = d.tangent_part(&e_yx);
            for z in 0..nbp {
                let zv = &bp_tab.center[z];
                let jz = j.apply(zv);
                let fz = d.tangent_part(&d.expand(g, &jz));
                let lhs = g.inner(&om_x_jy, &fz)
                    + g.inner(&hs_x_jy, &jz)
                    + 3.0 * g.inner(&om_y_jx, zv);
                let rhs = g.inner(&om_y_jx, &fz)
                    + g.inner(&hs_y_jx, &jz)
                    + 3.0 * g.inner(&om_x_jy, zv);
                led.bump("b_cond", (lhs - rhs).abs());
            }
        }
    }

    // --- B = Rad + B0 closure (brackets that involve radical fields).
    for x in 0..nb0 {
        for y in 0..r {
            let br = bracket(b0_tab, &coeffs_b0[x], x, rad_tab, &coeffs_rad[y], y);
            led.bump("b_closure", component_outside(&b_span, &br));
        }
    }
    for x in 0..r {
        for y in 0..r {
            if x == y {
                continue;
            }
            let br = bracket(rad_tab, &coeffs_rad[x], x, rad_tab, &coeffs_rad[y], y);
            led.bump("b_closure", component_outside(&b_span, &br));
        }
    }
    for x in 0..nb0 {
        for y in 0..nb0 {
            if x == y {
                continue;
            }
            let br = bracket(b0_tab, &coeffs_b0[x], x, b0_tab, &coeffs_b0[y], y);
            led.bump("b_closure", component_outside(&b_span, &br));
        }
    }

    // --- Anti-invariant part B': closure and both conditions.
    // Tangential and screen-normal split fields of the structure images.
    let split_tabs = FieldTable::build_many(ctx, 2, |dd| {
        let rep = screen_generic_report(spec, dd);
        let mut f_part = Vec::with_capacity(rep.bprime.len());
        let mut w_part = Vec::with_capacity(rep.bprime.len());
        for v in &rep.bprime {
            let e = dd.expand(g, &j.apply(v));
            f_part.push(dd.tangent_part(&e));
            w_part.push(dd.sperp_part(&e));
        }
        vec![f_part, w_part]
    });
    let (fbp_tab, _wbp_tab) = (&split_tabs[0], &split_tabs[1]);

    for y in 0..nbp {
        for z in 0..nbp {
            if y == z {
                continue;
            }
            let br = bracket(bp_tab, &coeffs_bp[y], y, bp_tab, &coeffs_bp[z], z);
            led.bump("bprime_closure", component_outside(&bp_tab.center, &br));

            let yv = &bp_tab.center[y];
            let zv = &bp_tab.center[z];
            let wy = d.sperp_part(&d.expand(g, &j.apply(yv)));
            let wz = d.sperp_part(&d.expand(g, &j.apply(zv)));
            let wy_c = d.expand(g, &wy).sperp;
            let wz_c = d.expand(g, &wz).sperp;
            let a_wy_z = pv.contract_op(&mb.bar_a_w, &wy_c, &coeffs_bp[z]);
            let a_wz_y = pv.contract_op(&mb.bar_a_w, &wz_c, &coeffs_bp[y]);
            // Screen-connection terms on tangential split fields and on the
            // anti-invariant basis fields themselves.
            let om_y_fz = d.screen_part(&omega_of(fbp_tab, &coeffs_bp[y], yv, z));
            let om_z_fy = d.screen_part(&omega_of(fbp_tab, &coeffs_bp[z], zv, y));
            let om_z_y = d.screen_part(&omega_of(bp_tab, &coeffs_bp[z], zv, y));
            let om_y_z = d.screen_part(&omega_of(bp_tab, &coeffs_bp[y], yv, z));
            let v = om_y_fz + a_wy_z + om_z_y * 3.0 - om_z_fy - a_wz_y.clone() - om_y_z * 3.0;
            led.bump("bprime_cond_i", component_in(&b0_tab.center, &v));

            let fz = fbp_tab.center[z].clone();
            let fy = fbp_tab.center[y].clone();
            let hst_y_fz = pv.rad_form(&mb.bar_h_star, &coeffs_bp[y], &fz);
            let hst_z_fy = pv.rad_form(&mb.bar_h_star, &coeffs_bp[z], &fy);
            let hst_z_y = pv.rad_form(&mb.bar_h_star, &coeffs_bp[z], yv);
            let hst_y_z = pv.rad_form(&mb.bar_h_star, &coeffs_bp[y], zv);
            let a_wy_z2 = pv.contract_op(&mb.bar_a_w, &wy_c, &coeffs_bp[z]);
            let combo =
                a_wy_z2 - a_wz_y + hst_y_fz - hst_z_fy + hst_z_y * 3.0 - hst_y_z * 3.0;
            for i in 0..r {
                let jn = j.apply(&d.ltr[i]);
                led.bump("bprime_cond_ii", g.inner(&combo, &jn).abs());
            }
        }
    }

    // --- Geodesicity: second fundamental forms on B x B and B x B'.
    let mut b_args: Vec<Vec<f64>> = coeffs_rad.clone();
    b_args.extend(coeffs_b0.iter().cloned());
    for xc in &b_args {
        for yc in &b_args {
            led.bump("b_geodesic_hl", pv.contract2(&mb.bar_hl, xc, yc).norm());
            led.bump("b_geodesic_hs", pv.contract2(&mb.bar_hs, xc, yc).norm());
        }
        for zc in &coeffs_bp {
            led.bump("mixed_hl", pv.contract2(&mb.bar_hl, xc, zc).norm());
            led.bump("mixed_hs", pv.contract2(&mb.bar_hs, xc, zc).norm());
        }
    }

    // --- Mixed-geodesic characterization, X in B, Z in B'.
    let b_centers: Vec<DVector<f64>> = d
        .rad
        .iter()
        .cloned()
        .chain(b0_tab.center.iter().cloned())
        .collect();
    let wbp_tab = &split_tabs[1];
    for (xi_c, xv) in b_args.iter().zip(&b_centers) {
        for z in 0..nbp {
            let fz = fbp_tab.center[z].clone();
            let wz = wbp_tab.center[z].clone();
            let wz_c = d.expand(g, &wz).sperp;
            let fz_c = pv.tangent_coeffs(&fz);
            // Tensorial ingredients.
            let hl_x_fz = pv.contract2(&mb.bar_hl, xi_c, &fz_c);
            let hs_x_fz = pv.contract2(&mb.bar_hs, xi_c, &fz_c);
            let dl_x_wz = pv.contract_op(&mb.bar_d_l, &wz_c, xi_c);
            let a_wz_x = pv.contract_op(&mb.bar_a_w, &wz_c, xi_c);
            // Field ingredients.
            let e_fz = omega_of(fbp_tab, xi_c, xv, z);
            let om_x_fz = d.tangent_part(&e_fz);
            let e_wz = omega_of(wbp_tab, xi_c, xv, z);
            let oms_x_wz = d.sperp_part(&e_wz);
            // Transversal part of the structure applied to a vector.
            let trans_of = |v: &DVector<f64>| {
                let e = d.expand(g, &j.apply(v));
                d.ltr_part(&e) + d.sperp_part(&e)
            };
            led.bump("mixed_cond_i", trans_of(&(&hl_x_fz + &dl_x_wz)).norm());
            let wpart = trans_of(&(&om_x_fz - &a_wz_x));
            // w(...) keeps only the transversal image of a tangent vector;
            // C(...) is the transversal image of a transversal vector.
            let cpart = trans_of(&(&hs_x_fz + &oms_x_wz));
            led.bump("mixed_cond_ii", (wpart + cpart).norm());
            led.bump(
                "mixed_cond_iii",
                (&hs_x_fz + &dl_x_wz + &hl_x_fz + &oms_x_wz).norm(),
            );
            let _ = th;
        }
    }
}

/// The split-comparison relations satisfied by the structure images of the
/// connection on any submanifold of a flat structured ambient space: the
/// tangential, lightlike-transversal, and screen-normal comparisons.
pub fn umbilical_lemma_check(pv: &PointVerifier, mb: &LmBundle) -> Ledger {
    let ctx = &pv.ctx;
    let spec = ctx.spec;
    let g = &spec.metric;
    let j = &spec.bronze;
    let d = &ctx.decomp;
    let lm = &mb.lm;
    let k = ctx.frame_dim();
    let r = d.rad.len();
    let s = d.stmperp.len();
    let th = |v: &DVector<f64>| lm.theta(g, v);
    let mut led = Ledger::new();

    // Split fields of the structure images of the frame.
    let tabs = FieldTable::build_many(ctx, 3, |dd| {
        let mut f_part = Vec::with_capacity(dd.tm.len());
        let mut wl_part = Vec::with_capacity(dd.tm.len());
        let mut ws_part = Vec::with_capacity(dd.tm.len());
        for v in &dd.tm {
            let e = dd.expand(g, &j.apply(v));
            f_part.push(dd.tangent_part(&e));
            wl_part.push(dd.ltr_part(&e));
            ws_part.push(dd.sperp_part(&e));
        }
        vec![f_part, wl_part, ws_part]
    });
    let (f_tab, wl_tab, ws_tab) = (&tabs[0], &tabs[1], &tabs[2]);

    for a in 0..k {
        let xa: Vec<f64> = (0..k).map(|i| if i == a { 1.0 } else { 0.0 }).collect();
        for b in 0..k {
            let jyb = j.apply(&d.tm[b]);
            let thj = th(&jyb);
            let thb = th(&d.tm[b]);
            // Connection applied to each split field along B_a.
            let omega_split = |tab: &FieldTable| {
                let raw = tab.deriv(ctx, a, b) + lm.correction(g, j, &d.tm[a], &tab.center[b]);
                d.expand(g, &raw)
            };
            let e_f = omega_split(f_tab);
            let e_wl = omega_split(wl_tab);
            let e_ws = omega_split(ws_tab);
            // Shape-operator style terms via the barred Weingarten grids.
            let wl_c: Vec<f64> = (0..r)
                .map(|i| g.inner(&wl_tab.center[b], &d.rad[i]))
                .collect();
            let ws_c = d.expand(g, &ws_tab.center[b]).sperp;
            let a_wl_x = pv.contract_op(&mb.bar_a_n, &wl_c, &xa);
            let a_ws_x = pv.contract_op(&mb.bar_a_w, &ws_c, &xa);
            // Structure image of the induced derivative and of the forms.
            let e_jom = d.expand(g, &j.apply(&mb.omega[a][b]));
            let e_jhl = d.expand(g, &j.apply(&mb.bar_hl[a][b]));
            let e_jhs = d.expand(g, &j.apply(&mb.bar_hs[a][b]));

            // Tangential comparison.
            let lhs_t = d.tangent_part(&e_f) - &a_wl_x - &a_ws_x
                - &d.tm[a] * (lm.l * thj)
                - &mb.f[a] * (lm.m * thj);
            let rhs_t = d.tangent_part(&e_jom) + d.tangent_part(&e_jhs)
                - &mb.f[a] * (lm.l * thb)
                - &mb.f[a] * (3.0 * lm.m * thb)
                - &d.tm[a] * (lm.m * thb);
            led.bump("lemma_i", (lhs_t - rhs_t).norm());

            // Lightlike-transversal comparison.
            let lhs_l = d.ltr_part(&e_f) + d.ltr_part(&e_wl) - &mb.wl[a] * (lm.m * thj);
            let rhs_l = d.ltr_part(&e_jom) + d.ltr_part(&e_jhl)
                - &mb.wl[a] * (lm.l * thb)
                - &mb.wl[a] * (3.0 * lm.m * thb);
            led.bump("lemma_ii", (lhs_l - rhs_l).norm());

            // Screen-normal comparison.
            let lhs_s = d.sperp_part(&e_f) + d.sperp_part(&e_wl) + d.sperp_part(&e_ws)
                - &mb.ws[a] * (lm.m * thj);
            let rhs_s = d.sperp_part(&e_jom) + d.sperp_part(&e_jhs)
                - &mb.ws[a] * (lm.l * thb)
                - &mb.ws[a] * (3.0 * lm.m * thb);
            led.bump("lemma_iii", (lhs_s - rhs_s).norm());
        }
    }
    if r == 0 {
        led.skip("lemma_ii", "no lightlike transversal bundle at this point");
    }
    let _ = s;
    led
}

/// The two bundled example manifolds.
pub fn builtin_example(name: &str) -> Result<LoadedManifest, ManifestError> {
    match name {
        "bronze16" => load_manifest(include_str!("../manifests/bronze16.toml"), "bronze16"),
        "minimal11" => load_manifest(include_str!("../manifests/minimal11.toml"), "minimal11"),
        other => Err(ManifestError::Validation(format!(
            "unknown built-in example `{other}` (available: bronze16, minimal11)"
        ))),
    }
}

pub const BUILTIN_EXAMPLES: [&str; 2] = ["bronze16", "minimal11"];

/// A totally umbilical toy: the unit sphere inside a spacelike slice of a
/// 4-dimensional Lorentzian space, with the scalar structure.
pub fn umbilical_toy_spec() -> ManifoldSpec {
    let exprs = [
        "0",
        "cos(t1) * cos(t2)",
        "cos(t1) * sin(t2)",
        "sin(t1)",
    ];
    ManifoldSpec {
        param_dim: 2,
        ambient_dim: 4,
        metric: SignatureMetric::new(4, &[0]),
        embedding: exprs
            .iter()
            .map(|e| parse_expression(e, 2).unwrap())
            .collect(),
        bronze: BronzeStructure::new(DMatrix::identity(4, 4) * crate::exprdsl::sigma()),
        lm: LMParams {
            l: 1.0,
            m: 0.5,
            eta: DVector::from_row_slice(&[0.0, 0.0, 0.0, 1.0]),
        },
        frame: None,
        domain: vec![(0.2, 1.2), (0.2, 1.2)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn umbilical_sphere_fits_and_has_unit_mean_curvature() {
        let spec = umbilical_toy_spec();
        let pv = PointVerifier::new(&spec, &[0.5, 0.9]).unwrap();
        let mb = lm_bundle(&pv.ctx, &pv.lc, &spec.lm);
        let rep = umbilical_fit(&pv, &mb, None, 1e-8);
        assert!(rep.umbilical, "hl {:e} hs {:e} dl {:e}", rep.hl_residual, rep.hs_residual, rep.dl_residual);
        assert!((rep.mean_curvature_norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lemma_holds_on_umbilical_toy() {
        let spec = umbilical_toy_spec();
        let pv = PointVerifier::new(&spec, &[0.5, 0.9]).unwrap();
        let mb = lm_bundle(&pv.ctx, &pv.lc, &spec.lm);
        let led = umbilical_lemma_check(&pv, &mb);
        for (k, v) in &led.entries {
            assert!(*v < 1e-7, "{k} = {v:e}");
        }
    }

    #[test]
    fn identity_suite_on_flat_null_plane() {
        // Same flat degenerate plane as in the connection tests.
        let exprs = ["t1", "t1", "t2", "0"];
        let spec = ManifoldSpec {
            param_dim: 2,
            ambient_dim: 4,
            metric: SignatureMetric::new(4, &[0]),
            embedding: exprs
                .iter()
                .map(|e| parse_expression(e, 2).unwrap())
                .collect(),
            bronze: BronzeStructure::new(DMatrix::identity(4, 4) * crate::exprdsl::sigma()),
            lm: LMParams {
                l: 1.0,
                m: 0.5,
                eta: DVector::from_row_slice(&[0.0, 0.0, 1.0, 0.0]),
            },
            frame: None,
            domain: vec![(0.5, 1.5); 2],
        };
        let led = identity_suite(
            &spec,
            &[vec![1.0, 0.7], vec![0.8, 1.2]],
            &[spec.lm.clone(), LMParams { l: -0.7, m: 1.3, eta: spec.lm.eta.clone() }],
        )
        .unwrap();
        assert!(!led.entries.is_empty());
        for (k, v) in &led.entries {
            assert!(*v < 1e-7, "{k} = {v:e}");
        }
    }

    #[test]
    fn minimality_on_builtin_example() {
        let loaded = builtin_example("minimal11").unwrap();
        let pv = PointVerifier::new(&loaded.spec, &[0.3, 0.7, 0.5, 0.9, 0.75, 0.75]).unwrap();
        let rep = minimality_check(&pv, 1e-8);
        assert!(rep.hs_on_rad_residual < 1e-8, "{:e}", rep.hs_on_rad_residual);
        assert!(rep.frame_trace_residual < 1e-8, "{:e}", rep.frame_trace_residual);
        assert!(rep.minimal);
        // The basis-independent trace does not cancel for this example; the
        // two screen directions have different lengths, so the inverse-Gram
        // weights break the sign cancellation of the frame trace.
        assert!(rep.inverse_gram_trace_residual > 1e-3);
    }
}

//! Induced connections along a lightlike submanifold.
//!
//! The ambient space is flat, so the ambient covariant derivative of a field
//! along a tangent direction is a plain directional derivative: exact (via
//! embedding Hessians) for tangent-frame fields, central finite differences
//! with one Richardson step for frames constructed per point (xi, N, W,
//! screen projections).  From those derivatives the module assembles every
//! block of the Gauss/Weingarten splits for the Levi-Civita connection and
//! for the whole (l,m)-family on top of it, recording the discrepancy between
//! the direct split and the correction-formula route for each induced object.

use crate::semilinalg::subspace_distance;
use crate::structure::LMParams;
use crate::submanifold::{decompose, DecompError, Decomposition, EmbeddingJet, ManifoldSpec};
use nalgebra::DVector;
use std::collections::BTreeMap;
use thiserror::Error;

pub const FD_STEP: f64 = 1e-5;
const PIVOT_FLIP_TOL: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ConnError {
    #[error(transparent)]
    Decomp(#[from] DecompError),
    #[error("frame discontinuity along direction {axis}: subspace distance {distance:.3e}")]
    FrameDiscontinuity { axis: usize, distance: f64 },
}

struct AxisSamples {
    plus: Decomposition,
    minus: Decomposition,
    half_plus: Decomposition,
    half_minus: Decomposition,
}

/// A base point with everything needed to differentiate constructed frames:
/// the center decomposition and decompositions at t +- h and t +- h/2 along
/// every tangent-frame parameter direction.
pub struct PointContext<'a> {
    pub spec: &'a ManifoldSpec,
    pub t: Vec<f64>,
    pub jet: EmbeddingJet,
    pub decomp: Decomposition,
    axes: Vec<AxisSamples>,
    pub h: f64,
}

impl<'a> PointContext<'a> {
    pub fn new(spec: &'a ManifoldSpec, t: &[f64]) -> Result<Self, ConnError> {
        let jet = spec.eval_jets(t).map_err(DecompError::Eval)?;
        let decomp = crate::submanifold::decompose_at(spec, t, &jet)?;
        let fm = spec.frame_matrix();
        let h = FD_STEP;
        let n = spec.ambient_dim;
        let mut axes = Vec::with_capacity(fm.nrows());
        for a in 0..fm.nrows() {
            let dir: Vec<f64> = (0..spec.param_dim).map(|d| fm[(a, d)]).collect();
            let shifted = |s: f64| -> Vec<f64> {
                t.iter().zip(&dir).map(|(ti, di)| ti + s * di).collect()
            };
            let sample = |s: f64| -> Result<Decomposition, ConnError> {
                let d = decompose(spec, &shifted(s))?;
                for (center, other) in [
                    (&decomp.rad, &d.rad),
                    (&decomp.stm, &d.stm),
                    (&decomp.stmperp, &d.stmperp),
                ] {
                    let dist = subspace_distance(center, other, n);
                    if dist > PIVOT_FLIP_TOL {
                        return Err(ConnError::FrameDiscontinuity { axis: a, distance: dist });
                    }
                }
                Ok(d)
            };
            axes.push(AxisSamples {
                plus: sample(h)?,
                minus: sample(-h)?,
                half_plus: sample(h / 2.0)?,
                half_minus: sample(-h / 2.0)?,
            });
        }
        Ok(PointContext {
            spec,
            t: t.to_vec(),
            jet,
            decomp,
            axes,
            h,
        })
    }

    pub fn frame_dim(&self) -> usize {
        self.decomp.tm.len()
    }

    /// The four neighbor decompositions along frame direction `a`, ordered
    /// (t+h, t-h, t+h/2, t-h/2).  Lets callers precompute per-sample data and
    /// run the same central-difference/Richardson stencil as [`fd_field`].
    ///
    /// [`fd_field`]: PointContext::fd_field
    pub fn axis_samples(&self, a: usize) -> [&Decomposition; 4] {
        let ax = &self.axes[a];
        [&ax.plus, &ax.minus, &ax.half_plus, &ax.half_minus]
    }

    /// Derivative of a constructed vector field along tangent-frame direction
    /// `a`: central difference plus one Richardson halving.
    pub fn fd_field<F>(&self, a: usize, field: F) -> DVector<f64>
    where
        F: Fn(&Decomposition) -> DVector<f64>,
    {
        let ax = &self.axes[a];
        let d_h = (field(&ax.plus) - field(&ax.minus)) / (2.0 * self.h);
        let d_h2 = (field(&ax.half_plus) - field(&ax.half_minus)) / self.h;
        (d_h2 * 4.0 - d_h) / 3.0
    }

    /// Same engine for scalar functions of the base point.
    pub fn fd_scalar<F>(&self, a: usize, f: F) -> f64
    where
        F: Fn(&Decomposition) -> f64,
    {
        let ax = &self.axes[a];
        let d_h = (f(&ax.plus) - f(&ax.minus)) / (2.0 * self.h);
        let d_h2 = (f(&ax.half_plus) - f(&ax.half_minus)) / self.h;
        (4.0 * d_h2 - d_h) / 3.0
    }

    /// Exact ambient derivative of tangent frame field B_b along B_a.
    pub fn nabla_bar_frame(&self, a: usize, b: usize) -> DVector<f64> {
        self.spec.frame_derivative(&self.jet, a, b)
    }

    /// Screen projection of tangent vector field index b, as a field.
    fn jb_field(spec: &ManifoldSpec, d: &Decomposition, b: usize) -> DVector<f64> {
        let mut v = d.tm[b].clone();
        for i in 0..d.rad.len() {
            let c = spec.metric.inner(&d.tm[b], &d.ltr[i]);
            v -= &d.rad[i] * c;
        }
        v
    }

    pub fn jb(&self, b: usize) -> DVector<f64> {
        Self::jb_field(self.spec, &self.decomp, b)
    }
}

type Grid = Vec<Vec<DVector<f64>>>;

/// Gauss/Weingarten blocks of the Levi-Civita connection at a point.
/// Indexing: [a][b] over tangent-frame pairs, [i][a] over (radical index,
/// frame index), [j][a] over (screen-normal index, frame index).
pub struct LcBundle {
    /// Exact ambient derivative of B_b along B_a.
    pub nabla_bar: Grid,
    pub nabla: Grid,
    pub hl: Grid,
    pub hs: Grid,
    /// Weingarten of N_i: A_N, nabla^l, D^s.
    pub a_n: Grid,
    pub nabla_l: Grid,
    pub d_s: Grid,
    /// Weingarten of W_j: A_W, nabla^s, D^l.
    pub a_w: Grid,
    pub nabla_s: Grid,
    pub d_l: Grid,
    /// Induced derivative of xi_i and its splits.
    pub nabla_xi: Grid,
    pub hl_xi: Grid,
    pub hs_xi: Grid,
    pub a_star: Grid,
    pub nabla_star_t: Grid,
    /// Derivative of the screen projections JB_b and its splits.
    pub nabla_jb: Grid,
    pub hl_jb: Grid,
    pub hs_jb: Grid,
    pub nabla_star: Grid,
    pub h_star: Grid,
    /// Screen projections JB_b at the center point.
    pub jb: Vec<DVector<f64>>,
}

pub fn levi_civita_bundle(ctx: &PointContext) -> LcBundle {
    let spec = ctx.spec;
    let g = &spec.metric;
    let d = &ctx.decomp;
    let k = ctx.frame_dim();
    let r = d.rad.len();
    let s = d.stmperp.len();

    let mut nabla_bar = vec![vec![DVector::zeros(0); k]; k];
    let mut nabla = vec![vec![DVector::zeros(0); k]; k];
    let mut hl = vec![vec![DVector::zeros(0); k]; k];
    let mut hs = vec![vec![DVector::zeros(0); k]; k];
    for a in 0..k {
        for b in 0..k {
            let db = ctx.nabla_bar_frame(a, b);
            let e = d.expand(g, &db);
            nabla[a][b] = d.tangent_part(&e);
            hl[a][b] = d.ltr_part(&e);
            hs[a][b] = d.sperp_part(&e);
            nabla_bar[a][b] = db;
        }
    }

    let mut a_n = vec![vec![DVector::zeros(0); k]; r];
    let mut nabla_l = vec![vec![DVector::zeros(0); k]; r];
    let mut d_s = vec![vec![DVector::zeros(0); k]; r];
    for i in 0..r {
        for a in 0..k {
            let dn = ctx.fd_field(a, |dd| dd.ltr[i].clone());
            let e = d.expand(g, &dn);
            a_n[i][a] = -d.tangent_part(&e);
            nabla_l[i][a] = d.ltr_part(&e);
            d_s[i][a] = d.sperp_part(&e);
        }
    }

    let mut a_w = vec![vec![DVector::zeros(0); k]; s];
    let mut nabla_s = vec![vec![DVector::zeros(0); k]; s];
    let mut d_l = vec![vec![DVector::zeros(0); k]; s];
    for j in 0..s {
        for a in 0..k {
            let dw = ctx.fd_field(a, |dd| dd.stmperp[j].clone());
            let e = d.expand(g, &dw);
            a_w[j][a] = -d.tangent_part(&e);
            nabla_s[j][a] = d.sperp_part(&e);
            d_l[j][a] = d.ltr_part(&e);
        }
    }

    let mut nabla_xi = vec![vec![DVector::zeros(0); k]; r];
    let mut hl_xi = vec![vec![DVector::zeros(0); k]; r];
    let mut hs_xi = vec![vec![DVector::zeros(0); k]; r];
    let mut a_star = vec![vec![DVector::zeros(0); k]; r];
    let mut nabla_star_t = vec![vec![DVector::zeros(0); k]; r];
    for i in 0..r {
        for a in 0..k {
            let dxi = ctx.fd_field(a, |dd| dd.rad[i].clone());
            let e = d.expand(g, &dxi);
            nabla_xi[i][a] = d.tangent_part(&e);
            hl_xi[i][a] = d.ltr_part(&e);
            hs_xi[i][a] = d.sperp_part(&e);
            a_star[i][a] = -d.screen_part(&e);
            nabla_star_t[i][a] = d.rad_part(&e);
        }
    }

    let mut nabla_jb = vec![vec![DVector::zeros(0); k]; k];
    let mut hl_jb = vec![vec![DVector::zeros(0); k]; k];
    let mut hs_jb = vec![vec![DVector::zeros(0); k]; k];
    let mut nabla_star = vec![vec![DVector::zeros(0); k]; k];
    let mut h_star = vec![vec![DVector::zeros(0); k]; k];
    for a in 0..k {
        for b in 0..k {
            let djb = ctx.fd_field(a, |dd| PointContext::jb_field(spec, dd, b));
            let e = d.expand(g, &djb);
            nabla_jb[a][b] = d.tangent_part(&e);
            hl_jb[a][b] = d.ltr_part(&e);
            hs_jb[a][b] = d.sperp_part(&e);
            nabla_star[a][b] = d.screen_part(&e);
            h_star[a][b] = d.rad_part(&e);
        }
    }

    let jb = (0..k).map(|b| ctx.jb(b)).collect();

    LcBundle {
        nabla_bar,
        nabla,
        hl,
        hs,
        a_n,
        nabla_l,
        d_s,
        a_w,
        nabla_s,
        d_l,
        nabla_xi,
        hl_xi,
        hs_xi,
        a_star,
        nabla_star_t,
        nabla_jb,
        hl_jb,
        hs_jb,
        nabla_star,
        h_star,
        jb,
    }
}

/// The barred family induced by the (l,m)-connection, computed by splitting
/// the (l,m)-corrected ambient derivatives directly, plus the discrepancy
/// between that and the correction-formula route from unbarred objects.
pub struct LmBundle {
    pub lm: LMParams,
    /// Raw ambient values of the connection applied to frame pairs.
    pub omega_raw: Grid,
    pub omega: Grid,
    pub bar_hl: Grid,
    pub bar_hs: Grid,
    pub bar_a_n: Grid,
    pub bar_omega_l: Grid,
    pub bar_d_s: Grid,
    pub bar_a_w: Grid,
    pub bar_omega_s: Grid,
    pub bar_d_l: Grid,
    pub omega_xi: Grid,
    pub bar_hl_xi: Grid,
    pub bar_hs_xi: Grid,
    pub bar_a_star: Grid,
    pub bar_omega_star_t: Grid,
    pub omega_jb: Grid,
    pub bar_hl_jb: Grid,
    pub bar_hs_jb: Grid,
    pub omega_star: Grid,
    pub bar_h_star: Grid,
    /// Tangential / ltr / screen-normal parts of J applied to each frame
    /// vector (the fX, w_l X, w_s X splits).
    pub f: Vec<DVector<f64>>,
    pub wl: Vec<DVector<f64>>,
    pub ws: Vec<DVector<f64>>,
    /// Max discrepancy between the direct split and the correction-formula
    /// expression, keyed by the induced-object label.
    pub route_residuals: BTreeMap<String, f64>,
}

pub fn lm_bundle(ctx: &PointContext, lc: &LcBundle, lm: &LMParams) -> LmBundle {
    let spec = ctx.spec;
    let g = &spec.metric;
    let j = &spec.bronze;
    let d = &ctx.decomp;
    let k = ctx.frame_dim();
    let r = d.rad.len();
    let s = d.stmperp.len();

    // Bronze splits of the tangent frame.
    let mut f = Vec::with_capacity(k);
    let mut wl = Vec::with_capacity(k);
    let mut ws = Vec::with_capacity(k);
    for a in 0..k {
        let e = d.expand(g, &j.apply(&d.tm[a]));
        f.push(d.tangent_part(&e));
        wl.push(d.ltr_part(&e));
        ws.push(d.sperp_part(&e));
    }
    let theta = |v: &DVector<f64>| lm.theta(g, v);
    // theta(Y)(lX + mJX) with X = B_a.
    let correction = |a: usize, y: &DVector<f64>| -> DVector<f64> {
        lm.correction(g, j, &d.tm[a], y)
    };
    let eta_of = |v: &DVector<f64>, i: usize| g.inner(v, &d.ltr[i]);
    // Screen projection of an arbitrary tangent vector at the center.
    let jproj = |v: &DVector<f64>| -> DVector<f64> {
        let mut out = v.clone();
        for i in 0..r {
            out -= &d.rad[i] * eta_of(v, i);
        }
        out
    };
    let mut route: BTreeMap<String, f64> = BTreeMap::new();
    let mut bump = |key: &str, diff: f64| {
        let e = route.entry(key.to_string()).or_insert(0.0);
        if diff > *e {
            *e = diff;
        }
    };

    let mut omega_raw = vec![vec![DVector::zeros(0); k]; k];
    let mut omega = vec![vec![DVector::zeros(0); k]; k];
    let mut bar_hl = vec![vec![DVector::zeros(0); k]; k];
    let mut bar_hs = vec![vec![DVector::zeros(0); k]; k];
    for a in 0..k {
        for b in 0..k {
            let raw = &lc.nabla_bar[a][b] + correction(a, &d.tm[b]);
            let e = d.expand(g, &raw);
            omega[a][b] = d.tangent_part(&e);
            bar_hl[a][b] = d.ltr_part(&e);
            bar_hs[a][b] = d.sperp_part(&e);
            let th = theta(&d.tm[b]);
            bump("e9", (&omega[a][b] - (&lc.nabla[a][b] + &d.tm[a] * (lm.l * th) + &f[a] * (lm.m * th))).norm());
            bump("e10", (&bar_hl[a][b] - (&lc.hl[a][b] + &wl[a] * (lm.m * th))).norm());
            bump("e11", (&bar_hs[a][b] - (&lc.hs[a][b] + &ws[a] * (lm.m * th))).norm());
            omega_raw[a][b] = raw;
        }
    }

    let mut bar_a_n = vec![vec![DVector::zeros(0); k]; r];
    let mut bar_omega_l = vec![vec![DVector::zeros(0); k]; r];
    let mut bar_d_s = vec![vec![DVector::zeros(0); k]; r];
    for i in 0..r {
        let th = theta(&d.ltr[i]);
        for a in 0..k {
            let raw = ctx.fd_field(a, |dd| dd.ltr[i].clone()) + correction(a, &d.ltr[i]);
            let e = d.expand(g, &raw);
            bar_a_n[i][a] = -d.tangent_part(&e);
            bar_omega_l[i][a] = d.ltr_part(&e);
            bar_d_s[i][a] = d.sperp_part(&e);
            bump("e12", (&bar_a_n[i][a] - (&lc.a_n[i][a] - &d.tm[a] * (lm.l * th) - &f[a] * (lm.m * th))).norm());
            bump("e13", (&bar_omega_l[i][a] - (&lc.nabla_l[i][a] + &wl[a] * (lm.m * th))).norm());
            bump("e14", (&bar_d_s[i][a] - (&lc.d_s[i][a] + &ws[a] * (lm.m * th))).norm());
        }
    }

    let mut bar_a_w = vec![vec![DVector::zeros(0); k]; s];
    let mut bar_omega_s = vec![vec![DVector::zeros(0); k]; s];
    let mut bar_d_l = vec![vec![DVector::zeros(0); k]; s];
    for jx in 0..s {
        let th = theta(&d.stmperp[jx]);
        for a in 0..k {
            let raw = ctx.fd_field(a, |dd| dd.stmperp[jx].clone()) + correction(a, &d.stmperp[jx]);
            let e = d.expand(g, &raw);
            bar_a_w[jx][a] = -d.tangent_part(&e);
            bar_omega_s[jx][a] = d.sperp_part(&e);
            bar_d_l[jx][a] = d.ltr_part(&e);
            bump("e15", (&bar_a_w[jx][a] - (&lc.a_w[jx][a] - &d.tm[a] * (lm.l * th) - &f[a] * (lm.m * th))).norm());
            bump("e16", (&bar_omega_s[jx][a] - (&lc.nabla_s[jx][a] + &ws[a] * (lm.m * th))).norm());
            bump("e17", (&bar_d_l[jx][a] - (&lc.d_l[jx][a] + &wl[a] * (lm.m * th))).norm());
        }
    }

    let mut omega_xi = vec![vec![DVector::zeros(0); k]; r];
    let mut bar_hl_xi = vec![vec![DVector::zeros(0); k]; r];
    let mut bar_hs_xi = vec![vec![DVector::zeros(0); k]; r];
    let mut bar_a_star = vec![vec![DVector::zeros(0); k]; r];
    let mut bar_omega_star_t = vec![vec![DVector::zeros(0); k]; r];
    for i in 0..r {
        let th = theta(&d.rad[i]);
        for a in 0..k {
            let raw = ctx.fd_field(a, |dd| dd.rad[i].clone()) + correction(a, &d.rad[i]);
            let e = d.expand(g, &raw);
            omega_xi[i][a] = d.tangent_part(&e);
            bar_hl_xi[i][a] = d.ltr_part(&e);
            bar_hs_xi[i][a] = d.sperp_part(&e);
            bar_a_star[i][a] = -d.screen_part(&e);
            bar_omega_star_t[i][a] = d.rad_part(&e);
            let jx_c = jproj(&d.tm[a]);
            let jfx = jproj(&f[a]);
            bump("e26", (&bar_a_star[i][a] - (&lc.a_star[i][a] - &jx_c * (lm.l * th) - &jfx * (lm.m * th))).norm());
            let mut rad_corr = DVector::zeros(spec.ambient_dim);
            for p in 0..r {
                rad_corr += &d.rad[p]
                    * (lm.l * th * eta_of(&d.tm[a], p) + lm.m * th * eta_of(&f[a], p));
            }
            bump("e27", (&bar_omega_star_t[i][a] - (&lc.nabla_star_t[i][a] + rad_corr)).norm());
        }
    }

    let mut omega_jb = vec![vec![DVector::zeros(0); k]; k];
    let mut bar_hl_jb = vec![vec![DVector::zeros(0); k]; k];
    let mut bar_hs_jb = vec![vec![DVector::zeros(0); k]; k];
    let mut omega_star = vec![vec![DVector::zeros(0); k]; k];
    let mut bar_h_star = vec![vec![DVector::zeros(0); k]; k];
    for a in 0..k {
        for b in 0..k {
            let jb_b = &lc.jb[b];
            let raw = ctx.fd_field(a, |dd| PointContext::jb_field(spec, dd, b)) + correction(a, jb_b);
            let e = d.expand(g, &raw);
            omega_jb[a][b] = d.tangent_part(&e);
            bar_hl_jb[a][b] = d.ltr_part(&e);
            bar_hs_jb[a][b] = d.sperp_part(&e);
            omega_star[a][b] = d.screen_part(&e);
            bar_h_star[a][b] = d.rad_part(&e);
            let th = theta(jb_b);
            let jx_c = jproj(&d.tm[a]);
            let jfx = jproj(&f[a]);
            bump("e24", (&omega_star[a][b] - (&lc.nabla_star[a][b] + &jfx * (lm.m * th) + &jx_c * (lm.l * th))).norm());
            let mut rad_corr = DVector::zeros(spec.ambient_dim);
            for p in 0..r {
                rad_corr += &d.rad[p]
                    * (lm.l * th * eta_of(&d.tm[a], p) + lm.m * th * eta_of(&f[a], p));
            }
            bump("e25", (&bar_h_star[a][b] - (&lc.h_star[a][b] + rad_corr)).norm());
        }
    }

    LmBundle {
        lm: lm.clone(),
        omega_raw,
        omega,
        bar_hl,
        bar_hs,
        bar_a_n,
        bar_omega_l,
        bar_d_s,
        bar_a_w,
        bar_omega_s,
        bar_d_l,
        omega_xi,
        bar_hl_xi,
        bar_hs_xi,
        bar_a_star,
        bar_omega_star_t,
        omega_jb,
        bar_hl_jb,
        bar_hs_jb,
        omega_star,
        bar_h_star,
        f,
        wl,
        ws,
        route_residuals: route,
    }
}

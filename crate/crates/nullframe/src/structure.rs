//! Bronze structure on the ambient space and the (l,m)-family of connections.
//!
//! A bronze structure is an endomorphism J with J^2 = 3J + I; its eigenvalues
//! are sigma = (3+sqrt(13))/2 and 3 - sigma.  Compatibility with the metric
//! means g(X, JY) = g(JX, Y).

use crate::exprdsl::sigma;
use crate::semilinalg::SignatureMetric;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct BronzeStructure {
    pub mat: DMatrix<f64>,
}

impl BronzeStructure {
    pub fn new(mat: DMatrix<f64>) -> Self {
        assert_eq!(mat.nrows(), mat.ncols());
        BronzeStructure { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.mat * x
    }

    /// max |J^2 - 3J - I|.
    pub fn structure_residual(&self) -> f64 {
        let n = self.dim();
        let j2 = &self.mat * &self.mat;
        (j2 - &self.mat * 3.0 - DMatrix::<f64>::identity(n, n)).amax()
    }

    /// max over basis pairs of |g(e_i, J e_j) - g(J e_i, e_j)|.  For a
    /// diagonal metric this is |eps_i J_ij - eps_j J_ji| entrywise.
    pub fn compatibility_residual(&self, metric: &SignatureMetric) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let d = metric.eps[i] * self.mat[(i, j)] - metric.eps[j] * self.mat[(j, i)];
                worst = worst.max(d.abs());
            }
        }
        worst
    }

    /// Products of bronze characters g(JX,JY) = 3g(X,JY) + g(X,Y): residual
    /// over all basis pairs.
    pub fn product_residual(&self, metric: &SignatureMetric) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            let ei = DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 });
            let jei = self.apply(&ei);
            for j in 0..n {
                let ej = DVector::from_fn(n, |k, _| if k == j { 1.0 } else { 0.0 });
                let jej = self.apply(&ej);
                let lhs = metric.inner(&jei, &jej);
                let rhs = 3.0 * metric.inner(&ei, &jej) + metric.inner(&ei, &ej);
                worst = worst.max((lhs - rhs).abs());
            }
        }
        worst
    }

    /// Distance from each eigenvalue to the nearest of {sigma, 3 - sigma}.
    pub fn eigenvalue_residual(&self) -> f64 {
        let s = sigma();
        let conj = 3.0 - s;
        self.mat
            .complex_eigenvalues()
            .iter()
            .map(|ev| {
                let d_im = ev.im.abs();
                let d_re = (ev.re - s).abs().min((ev.re - conj).abs());
                d_re.max(d_im)
            })
            .fold(0.0_f64, f64::max)
    }
}

/// Coefficients of the connection family Omega_X Y = D_X Y + theta(Y)(l X + m J X),
/// with theta(X) = g(X, eta) for a fixed unit spacelike eta.
#[derive(Debug, Clone, PartialEq)]
pub struct LMParams {
    pub l: f64,
    pub m: f64,
    pub eta: DVector<f64>,
}

impl LMParams {
    pub fn theta(&self, metric: &SignatureMetric, x: &DVector<f64>) -> f64 {
        metric.inner(x, &self.eta)
    }

    /// |g(eta,eta) - 1|, should vanish for a unit spacelike eta.
    pub fn eta_norm_residual(&self, metric: &SignatureMetric) -> f64 {
        (metric.inner(&self.eta, &self.eta) - 1.0).abs()
    }

    /// The (l,m)-correction term theta(Y)(l X + m J X).
    pub fn correction(
        &self,
        metric: &SignatureMetric,
        bronze: &BronzeStructure,
        x: &DVector<f64>,
        y: &DVector<f64>,
    ) -> DVector<f64> {
        let th = self.theta(metric, y);
        x * (self.l * th) + bronze.apply(x) * (self.m * th)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bronze_2x2_companion() {
        // [[3,1],[1,0]] satisfies J^2 = 3J + I exactly.
        let j = BronzeStructure::new(DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 0.0]));
        assert!(j.structure_residual() < 1e-14);
        assert!(j.eigenvalue_residual() < 1e-12);
        let g = SignatureMetric::new(2, &[]);
        assert!(j.compatibility_residual(&g) < 1e-14);
        assert!(j.product_residual(&g) < 1e-13);
    }

    #[test]
    fn identity_is_not_bronze() {
        let j = BronzeStructure::new(DMatrix::identity(2, 2));
        // I^2 - 3I - I = -3I: residual 3.
        assert!((j.structure_residual() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn sigma_scaling_is_bronze() {
        let s = sigma();
        let j = BronzeStructure::new(DMatrix::identity(3, 3) * s);
        assert!(j.structure_residual() < 1e-12);
    }

    #[test]
    fn correction_term() {
        let g = SignatureMetric::new(2, &[]);
        let j = BronzeStructure::new(DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 0.0]));
        let lm = LMParams {
            l: 1.0,
            m: 2.0,
            eta: DVector::from_row_slice(&[0.0, 1.0]),
        };
        assert!(lm.eta_norm_residual(&g) < 1e-14);
        let x = DVector::from_row_slice(&[1.0, 0.0]);
        let y = DVector::from_row_slice(&[0.0, 5.0]);
        // theta(y) = 5; correction = 5*(x + 2*Jx) = 5*((1,0) + 2*(3,1)) = (35,10).
        let c = lm.correction(&g, &j, &x, &y);
        assert!((c[0] - 35.0).abs() < 1e-12);
        assert!((c[1] - 10.0).abs() < 1e-12);
    }
}

//! Per-vertex OLS and prewhitened GLS fits.

use alloc::vec;
use alloc::vec::Vec;

use crate::design::DesignMatrix;
use crate::linalg::Qr;
use crate::math::{dot, sqrt};
use crate::matrix::Matrix;
use crate::special::student_t_two_sided;
use crate::whiten::WhitenOperator;
use crate::GlmError;

/// Single-vertex regression output.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexFit {
    pub beta: Vec<f64>,
    pub residuals: Vec<f64>,
    pub sigma2: f64,
    pub se: Vec<f64>,
    pub tstats: Vec<f64>,
}

/// Field of per-vertex fits. Columns are vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct GlmFit {
    pub beta: Matrix,
    /// Residuals of the fitted model; for GLS these are the whitened residuals.
    pub residuals: Matrix,
    pub sigma2: Vec<f64>,
    pub dof: usize,
    pub se: Matrix,
    pub tstats: Matrix,
    /// Vertices whose fit failed; their entries are NaN and they are left out
    /// of summaries.
    pub failed: Vec<bool>,
}

impl GlmFit {
    /// Collects per-vertex results. `n_time` and `k` size the NaN fill used
    /// for failed vertices.
    pub fn from_vertices(
        fits: Vec<Result<VertexFit, GlmError>>,
        n_time: usize,
        k: usize,
    ) -> Result<Self, GlmError> {
        let dof = n_time as i64 - k as i64;
        if dof < 1 {
            return Err(GlmError::NoDegreesOfFreedom(dof));
        }
        let v = fits.len();
        let mut beta = Matrix::zeros(k, v);
        let mut residuals = Matrix::zeros(n_time, v);
        let mut se = Matrix::zeros(k, v);
        let mut tstats = Matrix::zeros(k, v);
        let mut sigma2 = vec![0.0; v];
        let mut failed = vec![false; v];
        for (j, fit) in fits.into_iter().enumerate() {
            match fit {
                Ok(f) => {
                    beta.col_mut(j).copy_from_slice(&f.beta);
                    residuals.col_mut(j).copy_from_slice(&f.residuals);
                    se.col_mut(j).copy_from_slice(&f.se);
                    tstats.col_mut(j).copy_from_slice(&f.tstats);
                    sigma2[j] = f.sigma2;
                }
                Err(_) => {
                    failed[j] = true;
                    beta.col_mut(j).fill(f64::NAN);
                    residuals.col_mut(j).fill(f64::NAN);
                    se.col_mut(j).fill(f64::NAN);
                    tstats.col_mut(j).fill(f64::NAN);
                    sigma2[j] = f64::NAN;
                }
            }
        }
        Ok(Self { beta, residuals, sigma2, dof: dof as usize, se, tstats, failed })
    }

    pub fn n_vertices(&self) -> usize {
        self.beta.cols()
    }
}

/// Factorization shared by every vertex of an OLS fit.
#[derive(Clone, Debug)]
pub struct OlsSolver {
    x: Matrix,
    qr: Qr,
    inv_gram_diag: Vec<f64>,
}

impl OlsSolver {
    pub fn new(x: &Matrix) -> Result<Self, GlmError> {
        let dof = x.rows() as i64 - x.cols() as i64;
        if dof < 1 {
            return Err(GlmError::NoDegreesOfFreedom(dof));
        }
        let qr = Qr::new(x);
        let inv_gram_diag = qr.inv_gram_diagonal().map_err(|_| GlmError::Singular)?;
        Ok(Self { x: x.clone(), qr, inv_gram_diag })
    }

    pub fn fit(&self, y: &[f64]) -> Result<VertexFit, GlmError> {
        if y.len() != self.x.rows() {
            return Err(GlmError::RowMismatch { response: y.len(), design: self.x.rows() });
        }
        let beta = self.qr.solve(y).map_err(|_| GlmError::Singular)?;
        let fitted = self.x.matvec(&beta);
        let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        let dof = (self.x.rows() - self.x.cols()) as f64;
        let sigma2 = dot(&residuals, &residuals) / dof;
        let se: Vec<f64> = self.inv_gram_diag.iter().map(|d| sqrt(sigma2 * d)).collect();
        let tstats = beta.iter().zip(&se).map(|(&b, &s)| t_ratio(b, s)).collect();
        Ok(VertexFit { beta, residuals, sigma2, se, tstats })
    }
}

fn t_ratio(beta: f64, se: f64) -> f64 {
    if se > 0.0 {
        beta / se
    } else if beta == 0.0 {
        0.0
    } else {
        beta.signum() * f64::INFINITY
    }
}

/// OLS at every column of `y` with one shared factorization of `X`.
pub fn fit_ols(y: &Matrix, x: &DesignMatrix) -> Result<GlmFit, GlmError> {
    let xm = x.matrix();
    if y.rows() != xm.rows() {
        return Err(GlmError::RowMismatch { response: y.rows(), design: xm.rows() });
    }
    let solver = OlsSolver::new(xm)?;
    let fits = y.columns().map(|c| solver.fit(c)).collect();
    GlmFit::from_vertices(fits, y.rows(), xm.cols())
}

/// OLS on already whitened data `(ỹ, X̃)`.
pub fn fit_whitened(y_tilde: &[f64], x_tilde: &Matrix) -> Result<VertexFit, GlmError> {
    OlsSolver::new(x_tilde)?.fit(y_tilde)
}

/// GLS with one whitening operator per vertex: OLS on `(W_v y_v, W_v X)`.
///
/// A vertex whose whitened design is singular is flagged in `failed` rather
/// than aborting the fit.
pub fn fit_gls(y: &Matrix, x: &DesignMatrix, whiteners: &[WhitenOperator]) -> Result<GlmFit, GlmError> {
    let xm = x.matrix();
    let (t, v) = (y.rows(), y.cols());
    if t != xm.rows() {
        return Err(GlmError::RowMismatch { response: t, design: xm.rows() });
    }
    if whiteners.len() != v {
        return Err(GlmError::WhitenerCount { expected: v, got: whiteners.len() });
    }
    let mut fits = Vec::with_capacity(v);
    for (j, w) in whiteners.iter().enumerate() {
        if w.size() != t {
            return Err(GlmError::WhitenerSize { expected: t, got: w.size() });
        }
        let (yt, xt) = w.apply(y.col(j), xm);
        fits.push(fit_whitened(&yt, &xt));
    }
    GlmFit::from_vertices(fits, t, xm.cols())
}

/// Two-sided p-values for one coefficient at every vertex, Student-t with
/// `fit.dof` degrees of freedom. Failed vertices yield NaN.
pub fn ttest(fit: &GlmFit, column: usize) -> Result<Vec<f64>, GlmError> {
    if fit.dof < 1 {
        return Err(GlmError::NoDegreesOfFreedom(fit.dof as i64));
    }
    if column >= fit.tstats.rows() {
        return Err(GlmError::ColumnOutOfRange { column, columns: fit.tstats.rows() });
    }
    let dof = fit.dof as f64;
    Ok((0..fit.n_vertices())
        .map(|v| student_t_two_sided(fit.tstats[(column, v)], dof))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{intercept_design, ColumnRole, Regressor};

    fn design(n: usize) -> DesignMatrix {
        let task = (0..n).map(|i| if (i / 10) % 2 == 0 { 1.0 } else { 0.0 }).collect();
        intercept_design(n, vec![Regressor::new("task", ColumnRole::Task, task)], vec![], vec![], vec![]).unwrap()
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn exact_fit_has_zero_residuals() {
        let x = design(40);
        let y = x.matrix().matvec(&[1.5, -2.0]);
        let fit = fit_ols(&Matrix::from_columns(40, &[y]), &x).unwrap();
        assert!(fit.residuals.max_abs() < 1e-12);
        assert!(fit.sigma2[0] < 1e-26);
        assert_eq!(fit.dof, 38);
    }

    #[test]
    fn intercept_only_fit_is_mean() {
        let y = noise(50, 3);
        let x = intercept_design(50, vec![], vec![], vec![], vec![]).unwrap();
        let fit = fit_ols(&Matrix::from_columns(50, &[&y]), &x).unwrap();
        let m = crate::math::mean(&y);
        assert!((fit.beta[(0, 0)] - m).abs() < 1e-14);
        for (r, v) in fit.residuals.col(0).iter().zip(&y) {
            assert!((r - (v - m)).abs() < 1e-14);
        }
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        let x = design(60);
        let y = Matrix::from_columns(60, &[noise(60, 1), noise(60, 2)]);
        let fit = fit_ols(&y, &x).unwrap();
        for v in 0..2 {
            for k in 0..2 {
                let d = dot(x.matrix().col(k), fit.residuals.col(v));
                assert!(d.abs() < 1e-10 * y.frobenius_norm());
            }
        }
    }

    #[test]
    fn identity_and_scaled_whitening_match_ols() {
        let x = design(60);
        let y = Matrix::from_columns(60, &[noise(60, 5), noise(60, 6)]);
        let ols = fit_ols(&y, &x).unwrap();
        let eye = vec![WhitenOperator::identity(60); 2];
        let gls = fit_gls(&y, &x, &eye).unwrap();
        assert!(gls.beta.sub(&ols.beta).max_abs() < 1e-12);
        assert!(gls.tstats.sub(&ols.tstats).max_abs() < 1e-12);
        let three = vec![WhitenOperator::scaled_identity(60, 3.0); 2];
        let gls3 = fit_gls(&y, &x, &three).unwrap();
        assert!(gls3.beta.sub(&ols.beta).max_abs() < 1e-12);
        assert!(gls3.tstats.sub(&ols.tstats).max_abs() < 1e-10);
    }

    #[test]
    fn tstat_invariant_under_joint_scaling() {
        let x = design(60);
        let y = noise(60, 9);
        let a = OlsSolver::new(x.matrix()).unwrap().fit(&y).unwrap();
        let mut xs = x.matrix().clone();
        xs.scale(7.0);
        let ys: Vec<f64> = y.iter().map(|v| v * 7.0).collect();
        let b = OlsSolver::new(&xs).unwrap().fit(&ys).unwrap();
        for (p, q) in a.tstats.iter().zip(&b.tstats) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn ttest_limits() {
        let mut fit = GlmFit::from_vertices(
            vec![Ok(VertexFit {
                beta: vec![0.0],
                residuals: vec![0.0; 3],
                sigma2: 1.0,
                se: vec![1.0],
                tstats: vec![0.0],
            })],
            3,
            1,
        )
        .unwrap();
        assert_eq!(ttest(&fit, 0).unwrap()[0], 1.0);
        let mut last = 1.0;
        for t in [0.5, 1.0, 2.0, 5.0, 20.0, f64::INFINITY] {
            fit.tstats[(0, 0)] = t;
            let p = ttest(&fit, 0).unwrap()[0];
            assert!(p < last);
            last = p;
        }
        assert_eq!(last, 0.0);
        assert!(ttest(&fit, 3).is_err());
    }

    #[test]
    fn ttest_matches_integrated_density() {
        // Oracle: Simpson integration of the Student-t density over [0, t].
        let (nu, t) = (276.0f64, 1.9687f64);
        let c = crate::math::exp(
            crate::math::ln_gamma((nu + 1.0) / 2.0) - crate::math::ln_gamma(nu / 2.0),
        ) / sqrt(nu * core::f64::consts::PI);
        let f = |x: f64| c * crate::math::pow(1.0 + x * x / nu, -(nu + 1.0) / 2.0);
        let n = 20_000;
        let h = t / n as f64;
        let mut s = f(0.0) + f(t);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        let central = s * h / 3.0;
        let oracle = 1.0 - 2.0 * central;
        let p = student_t_two_sided(t, nu);
        assert!((p - oracle).abs() < 1e-9);
        assert!((p - 0.05).abs() < 1e-3);
    }
}

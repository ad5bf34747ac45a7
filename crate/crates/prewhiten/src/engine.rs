//! Parallel per-vertex drivers over the core routines.
//!
//! Every driver is an order-preserving parallel map over vertices, so the
//! results are bit-identical for any thread count.

use std::cell::Cell;

use prewhiten_core::arfit::{acf_series, aci_from_acf, fit_vertex_ar, ArField, ArOrder};
use prewhiten_core::glm::{fit_whitened, GlmFit, OlsSolver};
use prewhiten_core::regularize::{
    kernel_row, regularize_ar, regularize_with, Regularization, SmoothingOperator,
};
use prewhiten_core::sim::SimScenario;
use prewhiten_core::stats::{fdr_bh, ljung_box, DofMode, LjungBox, LjungBoxResult};
use prewhiten_core::whiten::{build_vertex, WhitenOptions, Whitening};
use prewhiten_core::{BoldMatrix, DesignMatrix, Matrix, RegularizeError, SurfaceMesh};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// A worker pool plus the drivers that run on it.
pub struct Engine {
    pool: rayon::ThreadPool,
}

impl Engine {
    /// `None` uses the available parallelism.
    pub fn new(threads: Option<usize>) -> Result<Self> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            if n == 0 {
                return Err(Error::Config("threads must be at least 1".into()));
            }
            b = b.num_threads(n);
        }
        let pool = b.build().map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    fn map<T: Send>(&self, n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }

    /// OLS at every vertex with one shared factorization.
    pub fn fit_ols(&self, y: &Matrix, x: &DesignMatrix) -> Result<GlmFit> {
        let xm = x.matrix();
        if y.rows() != xm.rows() {
            return Err(prewhiten_core::GlmError::RowMismatch { response: y.rows(), design: xm.rows() }.into());
        }
        let solver = OlsSolver::new(xm)?;
        let fits = self.map(y.cols(), |v| solver.fit(y.col(v)));
        Ok(GlmFit::from_vertices(fits, y.rows(), xm.cols())?)
    }

    /// ACI of every column; `truncate` limits the lags, `None` sums all.
    /// Constant or failed (NaN) columns give NaN.
    pub fn aci(&self, residuals: &Matrix, truncate: Option<usize>) -> Vec<f64> {
        let t = residuals.rows();
        let lag = truncate.map_or(t - 1, |l| l.min(t - 1));
        self.map(residuals.cols(), |v| {
            let col = residuals.col(v);
            if col.iter().any(|x| !x.is_finite()) {
                return f64::NAN;
            }
            match acf_series(col, lag) {
                Ok((r, true)) => aci_from_acf(&r),
                _ => f64::NAN,
            }
        })
    }

    /// AR fit at every vertex. Failed OLS vertices (NaN residuals) get the
    /// white placeholder.
    pub fn fit_ar(&self, residuals: &Matrix, order: ArOrder) -> Result<ArField> {
        let fits = self.map(residuals.cols(), |v| {
            let col = residuals.col(v);
            if col.iter().any(|x| !x.is_finite()) {
                return fit_vertex_ar(&vec![0.0; col.len()], order).map_err(|e| Error::from(e).at_vertex(v));
            }
            fit_vertex_ar(col, order).map_err(|e| Error::from(e).at_vertex(v))
        });
        let fits = fits.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(ArField::from_vertices(order.p_max(), fits))
    }

    /// Geodesic Gaussian smoother, rows built in parallel.
    pub fn smoother(&self, mesh: &SurfaceMesh, fwhm: f64) -> Result<SmoothingOperator> {
        if !(fwhm > 0.0 && fwhm.is_finite()) {
            return Err(RegularizeError::InvalidFwhm(fwhm).into());
        }
        if (0..mesh.n_vertices()).all(|v| mesh.is_masked(v)) {
            return Err(RegularizeError::EmptyMask.into());
        }
        let sigma = prewhiten_core::regularize::fwhm_to_sigma(fwhm);
        let rows = self.map(mesh.n_vertices(), |v| kernel_row(mesh, v, sigma));
        Ok(SmoothingOperator::from_rows(rows, fwhm))
    }

    /// Regularizes an AR field; local smoothing reuses `smoother` if given.
    pub fn regularize(
        &self,
        ar: &ArField,
        mode: Regularization,
        mesh: &SurfaceMesh,
        smoother: Option<&SmoothingOperator>,
    ) -> Result<ArField> {
        if mesh.n_vertices() != ar.n_vertices() {
            return Err(RegularizeError::DimensionMismatch { expected: mesh.n_vertices(), got: ar.n_vertices() }.into());
        }
        match (mode, smoother) {
            (Regularization::Local(_), Some(op)) => Ok(regularize_with(ar, op)?),
            (Regularization::Local(fwhm), None) => Ok(regularize_with(ar, &self.smoother(mesh, fwhm)?)?),
            _ => Ok(regularize_ar(ar, mode, mesh)?),
        }
    }

    /// Whitening operators for every vertex. A homogeneous field shares one
    /// operator; otherwise the per-vertex eigendecompositions run in
    /// parallel.
    pub fn whitening(&self, ar: &ArField, n: usize, design: &Matrix, options: WhitenOptions, data_variance: f64) -> Whitening {
        if ar.n_vertices() == 0 || ar.is_homogeneous() {
            return Whitening::new(ar, n, design, options, data_variance);
        }
        let floor = f64::EPSILON * data_variance.max(f64::MIN_POSITIVE);
        let built = self.map(ar.n_vertices(), |v| {
            let counter = Cell::new(0);
            let (op, flags) = build_vertex(ar, v, n, options, floor, &counter);
            (op, flags, counter.get())
        });
        let eig = built.iter().map(|b| b.2).sum();
        let (ops, flags): (Vec<_>, Vec<_>) = built.into_iter().map(|(o, f, _)| (o, f)).unzip();
        Whitening::from_parts(ops, flags, eig, None)
    }

    /// GLS: OLS on `(W_v y_v, W_v X)` at every vertex. Returned residuals
    /// are the whitened residuals.
    pub fn fit_gls(&self, y: &Matrix, design: &DesignMatrix, whitening: &Whitening) -> Result<GlmFit> {
        let xm = design.matrix();
        if y.rows() != xm.rows() {
            return Err(prewhiten_core::GlmError::RowMismatch { response: y.rows(), design: xm.rows() }.into());
        }
        let fits = if whitening.is_shared() {
            let op = whitening.operator(0);
            let solver = OlsSolver::new(&op.apply_matrix(xm));
            self.map(y.cols(), |v| match &solver {
                Ok(s) => s.fit(&op.apply_vec(y.col(v))),
                Err(e) => Err(e.clone()),
            })
        } else {
            self.map(y.cols(), |v| {
                let (yt, xt) = whitening.whiten_vertex(v, y.col(v), xm);
                fit_whitened(&yt, &xt)
            })
        };
        Ok(GlmFit::from_vertices(fits, y.rows(), xm.cols())?)
    }

    /// Ljung-Box on the first `n_head` samples of each column. FDR is applied
    /// over the vertices where `include` holds; other vertices are never
    /// significant and carry NaN statistics.
    pub fn ljung_box(
        &self,
        residuals: &Matrix,
        n_head: usize,
        lags: usize,
        mode: impl Fn(usize) -> DofMode + Sync + Send,
        q: f64,
        include: &[bool],
    ) -> Result<LjungBoxResult> {
        let n = n_head.min(residuals.rows());
        let tests = self.map(residuals.cols(), |v| {
            if !include[v] {
                return Ok(None);
            }
            ljung_box(&residuals.col(v)[..n], lags, mode(v)).map(Some).map_err(|e| Error::from(e).at_vertex(v))
        });
        let tests: Vec<Option<LjungBox>> = tests.into_iter().collect::<Result<_>>()?;
        let included: Vec<f64> = tests.iter().flatten().map(|t| t.pvalue).collect();
        let mut significant_mask = vec![false; tests.len()];
        if !included.is_empty() {
            let mask = fdr_bh(&included, q)?;
            let mut it = mask.into_iter();
            for (v, t) in tests.iter().enumerate() {
                if t.is_some() {
                    significant_mask[v] = it.next().expect("one flag per included test");
                }
            }
        }
        Ok(LjungBoxResult {
            statistic: tests.iter().map(|t| t.map_or(f64::NAN, |t| t.statistic)).collect(),
            dof: tests.iter().map(|t| t.map_or(0, |t| t.dof)).collect(),
            pvalue: tests.iter().map(|t| t.map_or(f64::NAN, |t| t.pvalue)).collect(),
            lags,
            significant_mask,
            dof_clamped: tests.iter().map(|t| t.is_some_and(|t| t.dof_clamped)).collect(),
        })
    }

    /// One simulated scan, vertices generated in parallel.
    pub fn simulate(&self, scenario: &SimScenario, scan: u64) -> BoldMatrix {
        let cols = self.map(scenario.n_vertices(), |v| scenario.vertex_series(scan, v));
        scenario.assemble(cols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use prewhiten_core::arfit::fit_ar_field;
    use prewhiten_core::glm::{fit_gls, fit_ols};
    use prewhiten_core::regularize::build_smoother;
    use prewhiten_core::sim::table2_grid_scenario;

    #[test]
    fn drivers_match_serial_core() {
        let sc = table2_grid_scenario(9, 3, 120, 5).unwrap();
        let design = prewhiten_core::sim::null_boxcar_experiment(
            sc.mesh.clone(),
            sc.scenario.regions.clone(),
            1,
            120,
            0.72,
            5,
        )
        .unwrap()
        .design;
        let e = Engine::new(Some(2)).unwrap();
        let y = sc.bold.data();
        let ols = e.fit_ols(y, &design).unwrap();
        assert_eq!(ols, fit_ols(y, &design).unwrap());
        let ar = e.fit_ar(&ols.residuals, ArOrder::Fixed(3)).unwrap();
        assert_eq!(ar, fit_ar_field(&ols.residuals, ArOrder::Fixed(3)).unwrap());
        let op = e.smoother(&sc.mesh, 5.0).unwrap();
        assert_eq!(op, build_smoother(&sc.mesh, 5.0).unwrap());
        let reg = e.regularize(&ar, Regularization::Local(5.0), &sc.mesh, Some(&op)).unwrap();
        assert_eq!(reg, regularize_ar(&ar, Regularization::Local(5.0), &sc.mesh).unwrap());
        let opts = WhitenOptions::default();
        let w = e.whitening(&reg, 120, design.matrix(), opts, 1.0);
        let serial = Whitening::new(&reg, 120, design.matrix(), opts, 1.0);
        assert_eq!(w.eigendecompositions(), serial.eigendecompositions());
        let gls = e.fit_gls(y, &design, &w).unwrap();
        assert_eq!(gls, fit_gls(y, &design, &serial.per_vertex()).unwrap());
        assert_eq!(e.simulate(&sc.scenario, 0), sc.bold);
    }

    #[test]
    fn shared_whitening_matches_per_vertex() {
        let sc = table2_grid_scenario(6, 2, 100, 1).unwrap();
        let design = prewhiten_core::design::intercept_design(100, vec![], vec![], vec![], vec![]).unwrap();
        let ar = ArField::homogeneous(&[0.4, 0.1], 1.3, 12);
        let e = Engine::new(Some(1)).unwrap();
        let w = e.whitening(&ar, 100, design.matrix(), WhitenOptions::default(), 1.0);
        assert!(w.is_shared());
        let a = e.fit_gls(sc.bold.data(), &design, &w).unwrap();
        let b = fit_gls(sc.bold.data(), &design, &w.per_vertex()).unwrap();
        for (x, y) in a.beta.as_slice().iter().zip(b.beta.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn ljung_box_excludes_vertices_from_fdr() {
        let sc = table2_grid_scenario(9, 2, 150, 3).unwrap();
        let e = Engine::new(Some(1)).unwrap();
        let mut include = vec![true; 18];
        include[0] = false;
        let lb = e.ljung_box(sc.bold.data(), 100, 20, |_| DofMode::InterceptOnly, 0.05, &include).unwrap();
        assert!(lb.statistic[0].is_nan() && !lb.significant_mask[0]);
        assert!(lb.pvalue[1..].iter().all(|p| (0.0..=1.0).contains(p)));
        assert!(Engine::new(Some(0)).is_err());
    }
}

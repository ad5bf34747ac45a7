//! Prewhitening operators built from AR coefficients.
//!
//! For each vertex: form a banded symmetric precision matrix from the AR
//! coefficients and white-noise variance, take its eigendecomposition, build
//! the symmetric square root `U D^{1/2} Uᵀ`, and zero every entry more than
//! `p` off the diagonal. The resulting band operator is applied to the
//! response and the design.

use alloc::vec;
use alloc::vec::Vec;
use core::cell::Cell;

use crate::arfit::ArField;
use crate::linalg::SymmetricEigen;
use crate::math::sqrt;
use crate::matrix::Matrix;
use crate::LinalgError;

/// Eigenvalues below this fraction of the largest are raised to it.
pub const EIGEN_FLOOR: f64 = 1e-6;

/// Symmetric band matrix stored by diagonals: `diags[q][i]` is entry
/// `(i, i + q)` (and `(i + q, i)`).
#[derive(Clone, Debug, PartialEq)]
pub struct SymBand {
    n: usize,
    diags: Vec<Vec<f64>>,
}

impl SymBand {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        let bw = bandwidth.min(n.saturating_sub(1));
        Self { n, diags: (0..=bw).map(|q| vec![0.0; n - q]).collect() }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.diags.len() - 1
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        self.diags.get(hi - lo).map_or(0.0, |d| d[lo])
    }

    pub fn diagonal(&self, q: usize) -> &[f64] {
        &self.diags[q]
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for (q, d) in self.diags.iter().enumerate() {
            for (i, &v) in d.iter().enumerate() {
                m[(i, i + q)] = v;
                m[(i + q, i)] = v;
            }
        }
        m
    }

    /// `self · x` in O(n·p).
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "band operator size mismatch");
        let mut out: Vec<f64> = self.diags[0].iter().zip(x).map(|(a, b)| a * b).collect();
        for (q, d) in self.diags.iter().enumerate().skip(1) {
            for (i, &w) in d.iter().enumerate() {
                out[i] += w * x[i + q];
                out[i + q] += w * x[i];
            }
        }
        out
    }

    pub fn scale(&mut self, c: f64) {
        self.diags.iter_mut().flatten().for_each(|v| *v *= c);
    }
}

/// Which banded precision is built from the AR coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PrecisionForm {
    /// 1 on the diagonal and `−φ_q` on the q-th off-diagonals. This band
    /// is not the inverse covariance of an AR process (for AR(1) it matches
    /// the pattern of the true precision only as φ → 0), so whitening with
    /// it leaves strong negative lag-1 correlation.
    Literal,
    /// `(I − Φ)ᵀ(I − Φ)` with `Φ` the strictly lower band of AR coefficients:
    /// the precision of the AR recursion started from zero initial values.
    #[default]
    ArPolynomial,
}

/// Spectral function applied to the precision eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RootMode {
    /// `W = U D^{1/2} Uᵀ`, so that `WᵀW` is the precision.
    #[default]
    SymmetricRoot,
    /// `W = U D Uᵀ`, the precision itself.
    AppendixLiteral,
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct WhitenOptions {
    pub form: PrecisionForm,
    pub root: RootMode,
    /// Skip the band truncation (tests and diagnostics only).
    pub keep_full: bool,
}

/// Precision `(1/s) Q⁻¹` for AR coefficients `phi`, size `n`.
///
/// A nonpositive `s` is raised to `variance_floor` and reported in the flag.
pub fn build_precision_with(
    phi: &[f64],
    s: f64,
    n: usize,
    form: PrecisionForm,
    variance_floor: f64,
) -> (SymBand, bool) {
    let p = phi.len().min(n.saturating_sub(1));
    let phi = &phi[..p];
    let (s, clamped) = if s > 0.0 { (s, false) } else { (variance_floor.max(f64::MIN_POSITIVE), true) };
    let mut band = SymBand::zeros(n, p);
    match form {
        PrecisionForm::Literal => {
            band.diags[0].fill(1.0);
            for (q, &f) in phi.iter().enumerate() {
                band.diags[q + 1].fill(-f);
            }
        }
        PrecisionForm::ArPolynomial => {
            // Row t of (I − Φ) is e_t = x_t − Σ_q φ_q x_{t−q}; accumulate
            // the outer product of each row.
            let mut a = Vec::with_capacity(p + 1);
            a.push(1.0);
            a.extend(phi.iter().map(|f| -f));
            for t in 0..n {
                let width = t.min(p);
                // entries (t − i) for i = 0..=width
                for i in 0..=width {
                    for j in i..=width {
                        // columns t−i and t−j, offset j − i
                        let lo = t - j;
                        band.diags[j - i][lo] += a[i] * a[j];
                    }
                }
            }
        }
    }
    band.scale(1.0 / s);
    (band, clamped)
}

/// Literal band precision: 1 on the diagonal, `−φ_q` at offsets ±q, scaled
/// by `1/s`.
pub fn build_precision(phi: &[f64], s: f64, n: usize) -> SymBand {
    build_precision_with(phi, s, n, PrecisionForm::Literal, f64::EPSILON).0
}

/// Banded prewhitening operator for one vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct WhitenOperator {
    band: SymBand,
}

impl WhitenOperator {
    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, c: f64) -> Self {
        let mut band = SymBand::zeros(n, 0);
        band.diags[0].fill(c);
        Self { band }
    }

    pub fn from_band(band: SymBand) -> Self {
        Self { band }
    }

    pub fn size(&self) -> usize {
        self.band.size()
    }

    pub fn bandwidth(&self) -> usize {
        self.band.bandwidth()
    }

    pub fn band(&self) -> &SymBand {
        &self.band
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.band.get(i, j)
    }

    pub fn to_dense(&self) -> Matrix {
        self.band.to_dense()
    }

    pub fn apply_vec(&self, y: &[f64]) -> Vec<f64> {
        self.band.mul_vec(y)
    }

    pub fn apply_matrix(&self, x: &Matrix) -> Matrix {
        let cols: Vec<Vec<f64>> = x.columns().map(|c| self.band.mul_vec(c)).collect();
        Matrix::from_columns(x.rows(), &cols)
    }

    /// `(W y, W X)`.
    pub fn apply(&self, y: &[f64], x: &Matrix) -> (Vec<f64>, Matrix) {
        (self.apply_vec(y), self.apply_matrix(x))
    }
}

/// Spectral root of a symmetric precision, before band truncation.
pub fn spectral_root(precision: &SymBand, root: RootMode) -> Result<Matrix, LinalgError> {
    let eig = SymmetricEigen::new(&precision.to_dense())?;
    let floor = floor_of(&eig.values);
    Ok(eig.reconstruct(|l| spectral_fn(l.max(floor), root)))
}

fn floor_of(values: &[f64]) -> f64 {
    EIGEN_FLOOR * values.last().copied().unwrap_or(0.0).max(0.0)
}

fn spectral_fn(l: f64, root: RootMode) -> f64 {
    match root {
        RootMode::SymmetricRoot => sqrt(l),
        RootMode::AppendixLiteral => l,
    }
}

/// Series longer than this are whitened from a block of this many samples;
/// see [`build_whitener`].
pub const LONG_SERIES_BLOCK: usize = 512;

/// Largest allowed change along the interior of a block whitener, relative
/// to its largest entry, for the block to be extended.
pub const EXTENSION_TOLERANCE: f64 = 1e-13;

/// Eigendecomposition-based whitener, truncated to bandwidth `p`.
///
/// For series longer than [`LONG_SERIES_BLOCK`] the precision is
/// Toeplitz away from its corners, and so is every spectral function of it
/// up to a perturbation that decays geometrically with the distance from
/// the corners. The whitener is then computed from a block that keeps both
/// corners, and its interior rows are repeated; the block is used only when
/// its interior rows agree to [`EXTENSION_TOLERANCE`], otherwise the full
/// matrix is decomposed.
pub fn build_whitener(precision: &SymBand, p: usize, root: RootMode) -> Result<WhitenOperator, LinalgError> {
    let n = precision.size();
    let bw = p.min(n.saturating_sub(1));
    let m = LONG_SERIES_BLOCK;
    if n > m && bw < m / 8 && precision.bandwidth() < m / 8 {
        if let Some(op) = extend_block(precision, bw, root)? {
            return Ok(op);
        }
    }
    dense_whitener(precision, bw, root)
}

fn dense_whitener(precision: &SymBand, bw: usize, root: RootMode) -> Result<WhitenOperator, LinalgError> {
    let n = precision.size();
    let eig = SymmetricEigen::new(&precision.to_dense())?;
    let floor = floor_of(&eig.values);
    let mut band = SymBand::zeros(n, bw);
    // Only the retained band of U f(D) Uᵀ is ever formed.
    for (k, &l) in eig.values.iter().enumerate() {
        let w = spectral_fn(l.max(floor), root);
        if w == 0.0 {
            continue;
        }
        let u = eig.vectors.col(k);
        for (q, d) in band.diags.iter_mut().enumerate() {
            for (i, slot) in d.iter_mut().enumerate() {
                *slot += w * u[i] * u[i + q];
            }
        }
    }
    Ok(WhitenOperator { band })
}

fn extend_block(precision: &SymBand, bw: usize, root: RootMode) -> Result<Option<WhitenOperator>, LinalgError> {
    let n = precision.size();
    let m = LONG_SERIES_BLOCK;
    let h = m / 2;
    let shift = n - m;
    // Top half from the leading corner, bottom half from the trailing one.
    let mut block = SymBand::zeros(m, precision.bandwidth());
    for (q, d) in block.diags.iter_mut().enumerate() {
        for (i, slot) in d.iter_mut().enumerate() {
            *slot = if i < h { precision.diags[q][i] } else { precision.diags[q][i + shift] };
        }
    }
    let small = dense_whitener(&block, bw, root)?.band;
    let scale = small.diags.iter().flatten().fold(0.0f64, |a, &b| a.max(b.abs()));
    let probe = m / 16;
    let drift = small
        .diags
        .iter()
        .map(|d| (d[h] - d[h - probe]).abs().max((d[h] - d[h + probe]).abs()))
        .fold(0.0f64, f64::max);
    if !(drift <= EXTENSION_TOLERANCE * scale) {
        return Ok(None);
    }
    let mut band = SymBand::zeros(n, bw);
    for (q, d) in band.diags.iter_mut().enumerate() {
        let src = &small.diags[q];
        for (i, slot) in d.iter_mut().enumerate() {
            *slot = if i < h {
                src[i]
            } else if i >= shift + h {
                src[i - shift]
            } else {
                src[h]
            };
        }
    }
    Ok(Some(WhitenOperator { band }))
}

/// Whitener for one AR model. Order-0 models give the scalar `f(1/s)`
/// without an eigendecomposition.
pub fn whitener_for(
    phi: &[f64],
    s: f64,
    n: usize,
    options: WhitenOptions,
    variance_floor: f64,
) -> Result<(WhitenOperator, bool), LinalgError> {
    let p = phi.iter().rposition(|&v| v != 0.0).map_or(0, |i| i + 1);
    let (precision, clamped) = build_precision_with(&phi[..p], s, n, options.form, variance_floor);
    if p == 0 {
        let d = precision.get(0, 0);
        return Ok((WhitenOperator::scaled_identity(n, spectral_fn(d, options.root)), clamped));
    }
    let bw = if options.keep_full { n } else { p };
    Ok((build_whitener(&precision, bw, options.root)?, clamped))
}

/// Outcome for one vertex of [`Whitening`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct WhitenFlags {
    pub variance_clamped: bool,
    /// Eigendecomposition failed; the identity was substituted.
    pub eigen_failed: bool,
}

/// Whitening operators for a whole field.
///
/// A homogeneous field (every vertex has the same AR model) shares one
/// operator and one whitened design; otherwise each vertex has its own.
#[derive(Clone, Debug)]
pub struct Whitening {
    operators: Vec<WhitenOperator>,
    shared: bool,
    shared_design: Option<Matrix>,
    pub flags: Vec<WhitenFlags>,
    eigendecompositions: usize,
}

impl Whitening {
    /// Builds every operator serially. `data_variance` scales the floor used
    /// for nonpositive white-noise variances.
    pub fn new(ar: &ArField, n: usize, design: &Matrix, options: WhitenOptions, data_variance: f64) -> Self {
        let floor = f64::EPSILON * data_variance.max(f64::MIN_POSITIVE);
        let v = ar.n_vertices();
        let counter = Cell::new(0usize);
        let build = |j: usize| build_vertex(ar, j, n, options, floor, &counter);
        if ar.is_homogeneous() && v > 0 {
            let (op, flag) = build(0);
            let xt = op.apply_matrix(design);
            return Self {
                operators: vec![op],
                shared: true,
                shared_design: Some(xt),
                flags: vec![flag; v],
                eigendecompositions: counter.get(),
            };
        }
        let (operators, flags) = (0..v).map(build).unzip();
        Self { operators, shared: false, shared_design: None, flags, eigendecompositions: counter.get() }
    }

    /// Assembles prebuilt per-vertex operators, for callers that build them
    /// in parallel with [`build_vertex`].
    pub fn from_parts(
        operators: Vec<WhitenOperator>,
        flags: Vec<WhitenFlags>,
        eigendecompositions: usize,
        shared_design: Option<Matrix>,
    ) -> Self {
        let shared = shared_design.is_some();
        Self { operators, shared, shared_design, flags, eigendecompositions }
    }

    pub fn eigendecompositions(&self) -> usize {
        self.eigendecompositions
    }

    pub fn is_shared(&self) -> bool {
        self.shared
    }

    pub fn operator(&self, v: usize) -> &WhitenOperator {
        if self.shared {
            &self.operators[0]
        } else {
            &self.operators[v]
        }
    }

    /// Operators expanded to one per vertex.
    pub fn per_vertex(&self) -> Vec<WhitenOperator> {
        (0..self.flags.len()).map(|v| self.operator(v).clone()).collect()
    }

    /// `(W_v y, W_v X)`; the shared design is reused when available.
    pub fn whiten_vertex(&self, v: usize, y: &[f64], design: &Matrix) -> (Vec<f64>, Matrix) {
        let op = self.operator(v);
        let xt = match &self.shared_design {
            Some(x) => x.clone(),
            None => op.apply_matrix(design),
        };
        (op.apply_vec(y), xt)
    }
}

/// Builds the operator of vertex `j`, counting eigendecompositions.
pub fn build_vertex(
    ar: &ArField,
    j: usize,
    n: usize,
    options: WhitenOptions,
    variance_floor: f64,
    counter: &Cell<usize>,
) -> (WhitenOperator, WhitenFlags) {
    let phi = ar.active_coefficients(j);
    if phi.iter().any(|&v| v != 0.0) {
        counter.set(counter.get() + 1);
    }
    match whitener_for(phi, ar.s[j], n, options, variance_floor) {
        Ok((op, variance_clamped)) => (op, WhitenFlags { variance_clamped, eigen_failed: false }),
        Err(_) => (
            WhitenOperator::identity(n),
            WhitenFlags { variance_clamped: false, eigen_failed: true },
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arfit::ArField;

    fn ar_precision_dense(phi: &[f64], s: f64, n: usize) -> Matrix {
        let mut a = Matrix::identity(n);
        for t in 0..n {
            for (q, &f) in phi.iter().enumerate() {
                if t > q {
                    a[(t, t - q - 1)] = -f;
                }
            }
        }
        let mut m = a.transpose().matmul(&a);
        m.scale(1.0 / s);
        m
    }

    #[test]
    fn white_precision_is_identity() {
        let p = build_precision(&[], 1.0, 5);
        assert_eq!(p.to_dense(), Matrix::identity(5));
    }

    #[test]
    fn ar1_literal_precision() {
        let p = build_precision(&[0.5], 2.0, 3).to_dense();
        let expected = Matrix::from_row_major(3, 3, &[0.5, -0.25, 0.0, -0.25, 0.5, -0.25, 0.0, -0.25, 0.5]);
        assert_eq!(p, expected);
        assert_eq!(p, p.transpose());
    }

    #[test]
    fn ar_polynomial_precision_matches_product() {
        let phi = [0.4, -0.2, 0.1];
        let (band, _) = build_precision_with(&phi, 1.5, 12, PrecisionForm::ArPolynomial, 1e-16);
        assert!(band.to_dense().sub(&ar_precision_dense(&phi, 1.5, 12)).max_abs() < 1e-15);
    }

    #[test]
    fn nonpositive_variance_is_clamped() {
        let (band, clamped) = build_precision_with(&[0.2], 0.0, 4, PrecisionForm::Literal, 1e-10);
        assert!(clamped);
        assert!((band.get(0, 0) - 1e10).abs() < 1.0);
    }

    #[test]
    fn identity_and_scalar_roots() {
        let w = build_whitener(&build_precision(&[], 1.0, 6), 0, RootMode::SymmetricRoot).unwrap();
        assert!(w.to_dense().sub(&Matrix::identity(6)).max_abs() < 1e-15);
        let mut p = build_precision(&[], 1.0, 6);
        p.scale(4.0);
        let w = build_whitener(&p, 0, RootMode::SymmetricRoot).unwrap();
        let mut two = Matrix::identity(6);
        two.scale(2.0);
        assert!(w.to_dense().sub(&two).max_abs() < 1e-14);
    }

    #[test]
    fn truncated_whitener_is_banded_and_symmetric() {
        let p = build_precision(&[0.3, 0.1, 0.05], 1.0, 20);
        let w = build_whitener(&p, 3, RootMode::SymmetricRoot).unwrap();
        let d = w.to_dense();
        assert_eq!(d, d.transpose());
        for i in 0..20usize {
            for j in 0..20 {
                if i.abs_diff(j) > 3 {
                    assert_eq!(d[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn banded_apply_matches_dense_product() {
        let n = 32;
        let p = build_precision_with(&[0.2, 0.1, -0.05, 0.04, 0.02, 0.01], 1.3, n, PrecisionForm::ArPolynomial, 1e-16).0;
        let w = build_whitener(&p, 6, RootMode::SymmetricRoot).unwrap();
        let y: Vec<f64> = (0..n).map(|i| libm::sin(i as f64 * 1.7) + 0.3).collect();
        let x = Matrix::from_fn(n, 3, |i, j| libm::cos((i * (j + 1)) as f64 * 0.41));
        let (yt, xt) = w.apply(&y, &x);
        let dense = w.to_dense();
        let yd = dense.matvec(&y);
        let xd = dense.matmul(&x);
        for (a, b) in yt.iter().zip(&yd) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(xt.sub(&xd).max_abs() < 1e-12);
    }

    #[test]
    fn long_series_extension_matches_full_decomposition() {
        let n = 900;
        for (phi, form) in [
            (&[0.5, 0.3, 0.1][..], PrecisionForm::ArPolynomial),
            (&[0.425, 0.25, 0.1][..], PrecisionForm::Literal),
            (&[0.9][..], PrecisionForm::ArPolynomial),
        ] {
            let (p, _) = build_precision_with(phi, 1.7, n, form, 1e-16);
            let fast = build_whitener(&p, phi.len(), RootMode::SymmetricRoot).unwrap();
            let full = dense_whitener(&p, phi.len(), RootMode::SymmetricRoot).unwrap();
            let err = fast.to_dense().sub(&full.to_dense()).max_abs();
            assert!(err < 1e-11, "{phi:?}: {err}");
        }
    }

    #[test]
    fn order_zero_gets_scalar_whitener() {
        let (w, _) = whitener_for(&[0.0, 0.0], 4.0, 10, WhitenOptions::default(), 1e-16).unwrap();
        assert_eq!(w.bandwidth(), 0);
        assert!((w.get(3, 3) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn homogeneous_field_shares_one_decomposition() {
        let n = 40;
        let x = Matrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let ar = ArField::homogeneous(&[0.4, 0.1], 1.0, 100);
        let w = Whitening::new(&ar, n, &x, WhitenOptions::default(), 1.0);
        assert_eq!(w.eigendecompositions(), 1);
        assert!(w.is_shared());

        let mut ar = ArField::homogeneous(&[0.4, 0.1], 1.0, 100);
        for v in 0..100 {
            ar.phi[(0, v)] = 0.2 + 0.001 * v as f64;
        }
        let w = Whitening::new(&ar, n, &x, WhitenOptions::default(), 1.0);
        assert_eq!(w.eigendecompositions(), 100);
        assert!(!w.is_shared());
    }
}

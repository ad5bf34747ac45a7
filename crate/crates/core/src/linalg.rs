//! Dense linear algebra: Householder QR least squares, one-sided Jacobi
//! singular values, a pivoted LU solver, and the symmetric eigensolver used by
//! the whitener (Householder tridiagonalization followed by implicit QL).

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{dot, hypot, sqrt};
use crate::matrix::Matrix;
use crate::LinalgError;

/// Householder QR factorization of a tall matrix (`rows ≥ cols`).
#[derive(Clone, Debug)]
pub struct Qr {
    /// Householder vectors below the diagonal, R on and above it.
    qr: Matrix,
    r_diag: Vec<f64>,
}

impl Qr {
    pub fn new(a: &Matrix) -> Self {
        let (m, n) = (a.rows(), a.cols());
        assert!(m >= n, "QR needs rows >= cols");
        let mut qr = a.clone();
        let mut r_diag = vec![0.0; n];
        for k in 0..n {
            let mut nrm = {
                let c = &qr.col(k)[k..];
                c.iter().fold(0.0, |acc, &x| hypot(acc, x))
            };
            if nrm != 0.0 {
                if qr[(k, k)] < 0.0 {
                    nrm = -nrm;
                }
                for x in &mut qr.col_mut(k)[k..] {
                    *x /= nrm;
                }
                qr[(k, k)] += 1.0;
                for j in k + 1..n {
                    let s = {
                        let ck = &qr.col(k)[k..];
                        let cj = &qr.col(j)[k..];
                        -dot(ck, cj) / qr[(k, k)]
                    };
                    let ck: Vec<f64> = qr.col(k)[k..].to_vec();
                    for (x, v) in qr.col_mut(j)[k..].iter_mut().zip(&ck) {
                        *x += s * v;
                    }
                }
            }
            r_diag[k] = -nrm;
        }
        Self { qr, r_diag }
    }

    pub fn rows(&self) -> usize {
        self.qr.rows()
    }

    pub fn cols(&self) -> usize {
        self.qr.cols()
    }

    /// Smallest |R_kk| relative to the largest; zero means exactly singular.
    pub fn is_full_rank(&self) -> bool {
        self.r_diag.iter().all(|&d| d != 0.0)
    }

    /// Overwrites `y` with `Qᵀ y`.
    pub fn apply_qt(&self, y: &mut [f64]) {
        let (m, n) = (self.qr.rows(), self.qr.cols());
        assert_eq!(y.len(), m);
        for k in 0..n {
            let hk = self.qr[(k, k)];
            if hk == 0.0 {
                continue;
            }
            let v = &self.qr.col(k)[k..];
            let s = -dot(v, &y[k..]) / hk;
            for (yi, vi) in y[k..].iter_mut().zip(v) {
                *yi += s * vi;
            }
        }
    }

    /// Least-squares coefficients for one right-hand side.
    pub fn solve(&self, y: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let mut z = y.to_vec();
        self.apply_qt(&mut z);
        self.back_substitute(&z[..self.cols()])
    }

    /// Solves `R x = z` for the leading `cols` entries of `z`.
    pub fn back_substitute(&self, z: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.cols();
        if !self.is_full_rank() {
            return Err(LinalgError::Singular);
        }
        let mut x = z[..n].to_vec();
        for k in (0..n).rev() {
            x[k] /= self.r_diag[k];
            for i in 0..k {
                x[i] -= x[k] * self.qr[(i, k)];
            }
        }
        Ok(x)
    }

    /// Diagonal of `(AᵀA)⁻¹ = R⁻¹R⁻ᵀ`.
    pub fn inv_gram_diagonal(&self) -> Result<Vec<f64>, LinalgError> {
        let n = self.cols();
        if !self.is_full_rank() {
            return Err(LinalgError::Singular);
        }
        // Columns of R⁻¹ by back substitution on unit vectors; the diagonal of
        // R⁻¹R⁻ᵀ is the squared norm of each row of R⁻¹.
        let mut rinv = Matrix::zeros(n, n);
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            let x = self.back_substitute(&e)?;
            rinv.col_mut(c).copy_from_slice(&x);
        }
        Ok((0..n).map(|i| (0..n).map(|j| rinv[(i, j)] * rinv[(i, j)]).sum()).collect())
    }
}

/// Singular values of `a` in descending order (one-sided Jacobi).
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    let (m, n) = (a.rows(), a.cols());
    let mut u = a.clone();
    if n == 0 {
        return Vec::new();
    }
    let tol = 1e-15;
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(u.col(p), u.col(p));
                let beta = dot(u.col(q), u.col(q));
                let gamma = dot(u.col(p), u.col(q));
                if gamma == 0.0 || gamma.abs() <= tol * sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + sqrt(1.0 + zeta * zeta));
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / sqrt(1.0 + t * t);
                let s = c * t;
                for i in 0..m {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    u[(i, p)] = c * up - s * uq;
                    u[(i, q)] = s * up + c * uq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..n).map(|j| sqrt(dot(u.col(j), u.col(j)))).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Numerical rank with tolerance `rel_tol · σ_max`.
pub fn numerical_rank(a: &Matrix, rel_tol: f64) -> usize {
    let sv = singular_values(a);
    match sv.first() {
        None => 0,
        Some(&smax) if smax == 0.0 => 0,
        Some(&smax) => sv.iter().filter(|&&s| s > rel_tol * smax).count(),
    }
}

/// Solves a square system by Gaussian elimination with partial pivoting.
pub fn lu_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = a.rows();
    assert_eq!(a.cols(), n);
    assert_eq!(b.len(), n);
    let mut m = a.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| m[(i, k)].abs().total_cmp(&m[(j, k)].abs()))
            .unwrap_or(k);
        if m[(piv, k)] == 0.0 {
            return Err(LinalgError::Singular);
        }
        if piv != k {
            for j in 0..n {
                let t = m[(k, j)];
                m[(k, j)] = m[(piv, j)];
                m[(piv, j)] = t;
            }
            x.swap(k, piv);
        }
        for i in k + 1..n {
            let f = m[(i, k)] / m[(k, k)];
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                m[(i, j)] -= f * m[(k, j)];
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| m[(k, j)] * x[j]).sum();
        x[k] = (x[k] - s) / m[(k, k)];
    }
    Ok(x)
}

/// Eigendecomposition `A = U diag(λ) Uᵀ` of a real symmetric matrix.
///
/// Eigenvalues are sorted ascending; column `i` of `vectors` pairs with
/// `values[i]`.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymmetricEigen {
    /// Only the lower triangle of `a` is read.
    pub fn new(a: &Matrix) -> Result<Self, LinalgError> {
        let n = a.rows();
        assert_eq!(a.cols(), n, "eigendecomposition needs a square matrix");
        if n == 0 {
            return Ok(Self { values: Vec::new(), vectors: Matrix::zeros(0, 0) });
        }
        if a.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        // Column-major storage: v[j * n + k] is element (k, j). The inner loops
        // below run over k so they stay contiguous.
        let mut v = a.clone().into_vec();
        let mut d = vec![0.0; n];
        let mut e = vec![0.0; n];
        tridiagonalize(n, &mut v, &mut d, &mut e);
        ql_implicit(n, &mut v, &mut d, &mut e)?;
        Ok(Self { values: d, vectors: Matrix::from_col_major(n, n, v) })
    }

    /// `U f(Λ) Uᵀ` for a spectral function `f`.
    pub fn reconstruct(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.values.len();
        let fv: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = Matrix::zeros(n, n);
        for (k, &w) in fv.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let u = self.vectors.col(k);
            for j in 0..n {
                let s = w * u[j];
                if s == 0.0 {
                    continue;
                }
                for (o, &ui) in out.col_mut(j).iter_mut().zip(u) {
                    *o += s * ui;
                }
            }
        }
        out
    }
}

#[inline]
fn at(v: &[f64], n: usize, row: usize, col: usize) -> f64 {
    v[col * n + row]
}

// Householder reduction to tridiagonal form with explicit accumulation of the
// orthogonal transform (EISPACK tred2 ordering).
fn tridiagonalize(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    for j in 0..n {
        d[j] = at(v, n, n - 1, j);
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in &d[..i] {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = at(v, n, i - 1, j);
                v[j * n + i] = 0.0;
                v[i * n + j] = 0.0;
            }
        } else {
            for dk in &mut d[..i] {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = sqrt(h);
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in &mut e[..i] {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[i * n + j] = f;
                let col = &v[j * n..j * n + n];
                g = e[j] + col[j] * f;
                for k in j + 1..i {
                    g += col[k] * d[k];
                    e[k] += col[k] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let (fj, gj) = (d[j], e[j]);
                let col = &mut v[j * n..j * n + n];
                for k in j..i {
                    col[k] -= fj * e[k] + gj * d[k];
                }
                d[j] = col[i - 1];
                col[i] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[i * n + n - 1] = at(v, n, i, i);
        v[i * n + i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            let (head, tail) = v.split_at_mut((i + 1) * n);
            let next = &tail[..n];
            for k in 0..=i {
                d[k] = next[k] / h;
            }
            for j in 0..=i {
                let col = &mut head[j * n..j * n + n];
                let g = dot(&next[..=i], &col[..=i]);
                for k in 0..=i {
                    col[k] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(i + 1) * n + k] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = at(v, n, n - 1, j);
        v[j * n + n - 1] = 0.0;
    }
    v[(n - 1) * n + n - 1] = 1.0;
    e[0] = 0.0;
}

// Implicit QL on the tridiagonal (d, e), rotating the eigenvector columns.
fn ql_implicit(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<(), LinalgError> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    let max_iter = 60;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > max_iter {
                    return Err(LinalgError::NoConvergence);
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in &mut d[l + 2..n] {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = v.split_at_mut((i + 1) * n);
                    let vi = &mut lo[i * n..];
                    let vi1 = &mut hi[..n];
                    for (a, b) in vi.iter_mut().zip(vi1.iter_mut()) {
                        let t = *b;
                        *b = s * *a + c * t;
                        *a = c * *a - s * t;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    // Selection sort into ascending order, swapping whole columns.
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for (j, &dj) in d.iter().enumerate().skip(i + 1) {
            if dj < p {
                k = j;
                p = dj;
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            let (lo, hi) = v.split_at_mut(k * n);
            lo[i * n..i * n + n].swap_with_slice(&mut hi[..n]);
        }
    }
    Ok(())
}

//! Spatial regularization of AR fields: geodesic Gaussian smoothing on the
//! mesh, or averaging over all vertices.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::arfit::{enforce_stationarity, ArField};
use crate::data::SurfaceMesh;
use crate::math::{exp, ln, sqrt};
use crate::matrix::Matrix;
use crate::RegularizeError;

/// Kernel support in units of σ.
pub const TRUNCATION_SIGMAS: f64 = 3.0;

/// `σ = FWHM / (2√(2 ln 2))`.
pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / (2.0 * sqrt(2.0 * ln(2.0)))
}

/// Sparse row-stochastic smoothing matrix in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothingOperator {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
    fwhm: f64,
    radius: f64,
    /// Unmasked vertices with no unmasked neighbor; they keep their own value.
    pub disconnected: Vec<bool>,
}

/// One row of the operator: `(column, weight)` pairs sorted by column.
pub type KernelRow = Vec<(usize, f64)>;

#[derive(PartialEq)]
struct Frontier(f64, usize);

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance, ties broken by vertex index.
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest-path distances from `source` over unmasked vertices, up to
/// `radius`. Returns `(vertex, distance)` pairs sorted by vertex.
pub fn geodesic_ball(mesh: &SurfaceMesh, source: usize, radius: f64) -> Vec<(usize, f64)> {
    let mut best: Vec<(usize, f64)> = vec![(source, 0.0)];
    let mut settled: Vec<(usize, f64)> = Vec::new();
    let mut heap = BinaryHeap::new();
    heap.push(Frontier(0.0, source));
    let lookup = |best: &[(usize, f64)], v: usize| best.iter().find(|e| e.0 == v).map(|e| e.1);
    while let Some(Frontier(d, v)) = heap.pop() {
        if settled.iter().any(|e| e.0 == v) || lookup(&best, v).is_some_and(|b| d > b) {
            continue;
        }
        settled.push((v, d));
        for &(u, len) in mesh.neighbors(v) {
            if mesh.is_masked(u) {
                continue;
            }
            let nd = d + len;
            if nd > radius {
                continue;
            }
            match best.iter_mut().find(|e| e.0 == u) {
                Some(e) if e.1 <= nd => {}
                Some(e) => {
                    e.1 = nd;
                    heap.push(Frontier(nd, u));
                }
                None => {
                    best.push((u, nd));
                    heap.push(Frontier(nd, u));
                }
            }
        }
    }
    settled.sort_unstable_by_key(|e| e.0);
    settled
}

/// Normalized Gaussian weights for one source vertex, plus whether the
/// vertex had no usable neighbor.
pub fn kernel_row(mesh: &SurfaceMesh, source: usize, sigma: f64) -> (KernelRow, bool) {
    if mesh.is_masked(source) {
        return (vec![(source, 1.0)], false);
    }
    let disconnected = mesh.neighbors(source).iter().all(|&(u, _)| mesh.is_masked(u));
    let ball = geodesic_ball(mesh, source, TRUNCATION_SIGMAS * sigma);
    let mut row: KernelRow = ball
        .into_iter()
        .map(|(u, d)| (u, exp(-d * d / (2.0 * sigma * sigma))))
        .collect();
    let total: f64 = row.iter().map(|e| e.1).sum();
    row.iter_mut().for_each(|e| e.1 /= total);
    (row, disconnected)
}

/// Geodesic Gaussian smoother with the given FWHM in millimetres.
pub fn build_smoother(mesh: &SurfaceMesh, fwhm: f64) -> Result<SmoothingOperator, RegularizeError> {
    if !(fwhm > 0.0 && fwhm.is_finite()) {
        return Err(RegularizeError::InvalidFwhm(fwhm));
    }
    let sigma = fwhm_to_sigma(fwhm);
    let rows = (0..mesh.n_vertices()).map(|v| kernel_row(mesh, v, sigma)).collect();
    Ok(SmoothingOperator::from_rows(rows, fwhm))
}

impl SmoothingOperator {
    /// Assembles rows produced by [`kernel_row`], in vertex order.
    pub fn from_rows(rows: Vec<(KernelRow, bool)>, fwhm: f64) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        let mut disconnected = Vec::with_capacity(rows.len());
        row_ptr.push(0);
        for (row, flag) in rows {
            for (c, w) in row {
                cols.push(c);
                weights.push(w);
            }
            row_ptr.push(cols.len());
            disconnected.push(flag);
        }
        Self { row_ptr, cols, weights, fwhm, radius: TRUNCATION_SIGMAS * fwhm_to_sigma(fwhm), disconnected }
    }

    pub fn n_vertices(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn fwhm(&self) -> f64 {
        self.fwhm
    }

    pub fn sigma(&self) -> f64 {
        fwhm_to_sigma(self.fwhm)
    }

    pub fn neighborhood_radius(&self) -> f64 {
        self.radius
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// `(column, weight)` pairs of row `v`.
    pub fn row(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[v]..self.row_ptr[v + 1];
        self.cols[r.clone()].iter().copied().zip(self.weights[r].iter().copied())
    }

    pub fn weight(&self, v: usize, u: usize) -> f64 {
        self.row(v).find(|e| e.0 == u).map_or(0.0, |e| e.1)
    }

    /// `(row, column, weight)` for every stored entry, row-major.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_vertices()).flat_map(move |v| self.row(v).map(move |(u, w)| (v, u, w)))
    }

    /// Smoothed copy of a per-vertex vector.
    pub fn apply(&self, field: &[f64]) -> Result<Vec<f64>, RegularizeError> {
        if field.len() != self.n_vertices() {
            return Err(RegularizeError::DimensionMismatch { expected: self.n_vertices(), got: field.len() });
        }
        Ok((0..self.n_vertices()).map(|v| self.row(v).map(|(u, w)| w * field[u]).sum()).collect())
    }
}

/// Smooths every row of a `rows × V` field independently.
pub fn smooth_field(op: &SmoothingOperator, field: &Matrix) -> Result<Matrix, RegularizeError> {
    if field.cols() != op.n_vertices() {
        return Err(RegularizeError::DimensionMismatch { expected: op.n_vertices(), got: field.cols() });
    }
    let mut out = Matrix::zeros(field.rows(), field.cols());
    for r in 0..field.rows() {
        let row = field.row(r);
        for (v, x) in op.apply(&row)?.into_iter().enumerate() {
            out[(r, v)] = x;
        }
    }
    Ok(out)
}

/// Replaces every unmasked column by the mean of the unmasked columns.
pub fn global_average(field: &Matrix, mask: Option<&[bool]>) -> Result<Matrix, RegularizeError> {
    let masked = |v: usize| mask.is_some_and(|m| m[v]);
    if let Some(m) = mask {
        if m.len() != field.cols() {
            return Err(RegularizeError::DimensionMismatch { expected: m.len(), got: field.cols() });
        }
    }
    let keep: Vec<usize> = (0..field.cols()).filter(|&v| !masked(v)).collect();
    if keep.is_empty() {
        return Err(RegularizeError::EmptyMask);
    }
    let mut mean = vec![0.0; field.rows()];
    for &v in &keep {
        for (m, x) in mean.iter_mut().zip(field.col(v)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= keep.len() as f64);
    let mut out = field.clone();
    for &v in &keep {
        out.col_mut(v).copy_from_slice(&mean);
    }
    Ok(out)
}

/// How AR parameters are shared across space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regularization {
    None,
    /// Geodesic Gaussian smoothing with this FWHM (mm).
    Local(f64),
    Global,
}

/// Regularizes AR coefficients and white-noise variances, then recounts
/// orders and restores stationarity where averaging broke it.
pub fn regularize_ar(ar: &ArField, mode: Regularization, mesh: &SurfaceMesh) -> Result<ArField, RegularizeError> {
    match mode {
        Regularization::None => Ok(ar.clone()),
        Regularization::Local(fwhm) => {
            let op = build_smoother(mesh, fwhm)?;
            regularize_with(ar, &op)
        }
        Regularization::Global => {
            let v = ar.n_vertices();
            if mesh.n_vertices() != v {
                return Err(RegularizeError::DimensionMismatch { expected: mesh.n_vertices(), got: v });
            }
            let stacked = stack(ar);
            let averaged = global_average(&stacked, mesh.boundary_mask())?;
            Ok(unstack(ar, &averaged))
        }
    }
}

/// Local regularization with a prebuilt smoother.
pub fn regularize_with(ar: &ArField, op: &SmoothingOperator) -> Result<ArField, RegularizeError> {
    let smoothed = smooth_field(op, &stack(ar))?;
    Ok(unstack(ar, &smoothed))
}

/// Coefficient rows followed by the variance row.
fn stack(ar: &ArField) -> Matrix {
    let p = ar.p_max;
    Matrix::from_fn(p + 1, ar.n_vertices(), |r, v| if r < p { ar.phi[(r, v)] } else { ar.s[v] })
}

fn unstack(template: &ArField, stacked: &Matrix) -> ArField {
    let p = template.p_max;
    let mut out = template.clone();
    for v in 0..template.n_vertices() {
        let col = stacked.col(v);
        let (phi, changed) = enforce_stationarity(&col[..p]);
        out.phi.col_mut(v).copy_from_slice(&phi);
        out.s[v] = col[p];
        out.order[v] = phi.iter().rposition(|&x| x != 0.0).map_or(0, |i| i + 1);
        out.nonstationary[v] = template.nonstationary[v] || changed;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_region(mesh: &SurfaceMesh, nx: usize) -> ArField {
        let mut ar = ArField::homogeneous(&[0.1], 1.0, mesh.n_vertices());
        for v in 0..mesh.n_vertices() {
            if v % nx >= nx / 2 {
                ar.phi[(0, v)] = 0.5;
            }
        }
        ar
    }

    #[test]
    fn sigma_from_fwhm() {
        assert!((fwhm_to_sigma(5.0) - 2.1233).abs() < 1e-4);
    }

    #[test]
    fn rows_sum_to_one_and_respect_radius() {
        let mesh = SurfaceMesh::planar_grid(12, 10, 2.0);
        let op = build_smoother(&mesh, 5.0).unwrap();
        for v in 0..mesh.n_vertices() {
            let total: f64 = op.row(v).map(|e| e.1).sum();
            assert!((total - 1.0).abs() < 1e-10);
            for (u, w) in op.row(v) {
                assert!(w >= 0.0);
                let [a, b] = [mesh.coords()[u], mesh.coords()[v]];
                // Graph distance is never shorter than the straight line.
                let e = sqrt((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2));
                assert!(e <= op.neighborhood_radius() + 1e-12);
            }
        }
    }

    #[test]
    fn interior_weights_are_reflection_symmetric() {
        let nx = 15;
        let mesh = SurfaceMesh::planar_grid(nx, 15, 2.0);
        let op = build_smoother(&mesh, 5.0).unwrap();
        let centre = 7 * nx + 7;
        let at = |dx: isize, dy: isize| {
            let u = ((7 + dy) as usize) * nx + (7 + dx) as usize;
            op.weight(centre, u)
        };
        let mut worst: f64 = 0.0;
        for dx in -3..=3isize {
            for dy in -3..=3isize {
                // The triangulation's diagonal runs along (1, 1), so the
                // reflections that preserve it are the swap and the point
                // reflection.
                worst = worst.max((at(dx, dy) - at(dy, dx)).abs());
                worst = worst.max((at(dx, dy) - at(-dx, -dy)).abs());
            }
        }
        assert!(worst < 1e-9, "asymmetry {worst}");
    }

    #[test]
    fn constants_are_fixed_and_maxima_contract() {
        let mesh = SurfaceMesh::planar_grid(9, 9, 2.0);
        let op = build_smoother(&mesh, 5.0).unwrap();
        let out = op.apply(&vec![0.7; 81]).unwrap();
        assert!(out.iter().all(|x| (x - 0.7).abs() < 1e-12));
        let mut delta = vec![0.0; 81];
        delta[40] = 1.0;
        let out = op.apply(&delta).unwrap();
        assert!(out.iter().cloned().fold(0.0, f64::max) < 1.0);
    }

    #[test]
    fn smoothing_stays_in_convex_hull_and_is_linear() {
        let nx = 10;
        let mesh = SurfaceMesh::planar_grid(nx, 6, 2.0);
        let ar = two_region(&mesh, nx);
        let out = regularize_ar(&ar, Regularization::Local(5.0), &mesh).unwrap();
        assert!(out.phi.row(0).iter().all(|&x| (0.1 - 1e-12..=0.5 + 1e-12).contains(&x)));

        let op = build_smoother(&mesh, 5.0).unwrap();
        let f: Vec<f64> = (0..60).map(|i| libm::sin(i as f64)).collect();
        let g: Vec<f64> = (0..60).map(|i| libm::cos(0.3 * i as f64)).collect();
        let comb: Vec<f64> = f.iter().zip(&g).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let (sf, sg, sc) = (op.apply(&f).unwrap(), op.apply(&g).unwrap(), op.apply(&comb).unwrap());
        for i in 0..60 {
            assert!((sc[i] - (2.0 * sf[i] - 3.0 * sg[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn tiny_kernel_is_identity() {
        let mesh = SurfaceMesh::planar_grid(6, 6, 2.0);
        let ar = two_region(&mesh, 6);
        // 3σ below the 2 mm edge length.
        let out = regularize_ar(&ar, Regularization::Local(1.0), &mesh).unwrap();
        assert_eq!(out, ar);
    }

    #[test]
    fn masked_vertices_neither_give_nor_receive() {
        let mut mask = vec![false; 5];
        mask[2] = true;
        let mesh = SurfaceMesh::polyline(5, 2.0).with_mask(mask).unwrap();
        let op = build_smoother(&mesh, 5.0).unwrap();
        let out = op.apply(&[1.0, 1.0, 100.0, 3.0, 3.0]).unwrap();
        assert_eq!(out[2], 100.0);
        assert!((out[0] - 1.0).abs() < 1e-12 && (out[4] - 3.0).abs() < 1e-12);
        assert!(!op.disconnected[0]);
        let lone = SurfaceMesh::polyline(3, 2.0).with_mask(vec![false, true, false]).unwrap();
        let op = build_smoother(&lone, 5.0).unwrap();
        assert!(op.disconnected[0] && op.disconnected[2]);
        assert_eq!(op.weight(0, 0), 1.0);
    }

    #[test]
    fn global_average_of_two_regions() {
        let nx = 10;
        let mesh = SurfaceMesh::planar_grid(nx, 4, 2.0);
        let ar = two_region(&mesh, nx);
        let out = regularize_ar(&ar, Regularization::Global, &mesh).unwrap();
        assert!(out.phi.row(0).iter().all(|&x| (x - 0.3).abs() < 1e-12));
        assert!(out.is_homogeneous());
        let again = regularize_ar(&out, Regularization::Global, &mesh).unwrap();
        assert!(again.phi.sub(&out.phi).max_abs() < 1e-15);
        let smoothed = regularize_ar(&out, Regularization::Local(5.0), &mesh).unwrap();
        assert!(smoothed.phi.sub(&out.phi).max_abs() < 1e-12);
    }

    #[test]
    fn global_average_needs_an_unmasked_vertex() {
        let f = Matrix::zeros(2, 3);
        assert_eq!(global_average(&f, Some(&[true, true, true])), Err(RegularizeError::EmptyMask));
    }

    #[test]
    fn orders_are_recounted() {
        let mesh = SurfaceMesh::polyline(5, 2.0);
        let mut ar = ArField::homogeneous(&[0.2, 0.0, 0.0], 1.0, 5);
        ar.phi[(2, 4)] = 0.1;
        ar.order = vec![1, 1, 1, 1, 3];
        let out = regularize_ar(&ar, Regularization::Global, &mesh).unwrap();
        assert!(out.order.iter().all(|&o| o == 3));
        let out = regularize_ar(&ar, Regularization::Local(5.0), &mesh).unwrap();
        assert_eq!(out.order[4], 3);
        assert_eq!(out.order[0], 1);
    }
}

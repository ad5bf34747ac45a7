//! Core containers: BOLD time-by-vertex data, surface meshes and event
//! schedules. Every constructor validates fully; there is no way to obtain a
//! partially checked value.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::sqrt;
use crate::matrix::Matrix;
use crate::DataError;

/// T×V response matrix, one column per vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct BoldMatrix {
    data: Matrix,
    tr: f64,
    vertex_ids: Vec<String>,
    constant: Vec<bool>,
}

impl BoldMatrix {
    /// Validates and wraps `data`. Missing ids default to `v0, v1, ...`.
    pub fn new(data: Matrix, tr: f64, vertex_ids: Option<Vec<String>>) -> Result<Self, DataError> {
        let (t, v) = (data.rows(), data.cols());
        if !(tr > 0.0 && tr.is_finite()) {
            return Err(DataError::InvalidTr(tr));
        }
        if t < 2 {
            return Err(DataError::TooFewSamples(t));
        }
        if v == 0 {
            return Err(DataError::NoVertices);
        }
        // Row-major scan so the first reported cell is the first in file order.
        for row in 0..t {
            for col in 0..v {
                if !data[(row, col)].is_finite() {
                    return Err(DataError::NonFinite { row, col });
                }
            }
        }
        let vertex_ids = match vertex_ids {
            Some(ids) if ids.len() != v => {
                return Err(DataError::IdCountMismatch { expected: v, got: ids.len() })
            }
            Some(ids) => ids,
            None => (0..v).map(|i| format!("v{i}")).collect(),
        };
        let constant = data.columns().map(|c| c.iter().all(|&x| x == c[0])).collect();
        Ok(Self { data, tr, vertex_ids, constant })
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn tr(&self) -> f64 {
        self.tr
    }

    pub fn n_time(&self) -> usize {
        self.data.rows()
    }

    pub fn n_vertices(&self) -> usize {
        self.data.cols()
    }

    pub fn vertex_ids(&self) -> &[String] {
        &self.vertex_ids
    }

    pub fn series(&self, v: usize) -> &[f64] {
        self.data.col(v)
    }

    /// Columns with zero variance. They are kept so vertex indexing stays
    /// stable; AR estimation treats them as white placeholders.
    pub fn constant_columns(&self) -> &[bool] {
        &self.constant
    }

    pub fn into_matrix(self) -> Matrix {
        self.data
    }
}

/// Triangle mesh with coordinates in millimetres.
///
/// Besides triangles a mesh may carry explicit line segments, which lets a
/// polyline (for example a strip of voxels) use the same smoothing machinery.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceMesh {
    coords: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    segments: Vec<[usize; 2]>,
    boundary_mask: Option<Vec<bool>>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl SurfaceMesh {
    pub fn new(
        coords: Vec<[f64; 3]>,
        faces: Vec<[usize; 3]>,
        segments: Vec<[usize; 2]>,
        boundary_mask: Option<Vec<bool>>,
    ) -> Result<Self, DataError> {
        let nv = coords.len();
        if nv == 0 {
            return Err(DataError::NoVertices);
        }
        if let Some(i) = coords.iter().position(|c| c.iter().any(|x| !x.is_finite())) {
            return Err(DataError::NonFiniteCoordinate(i));
        }
        for (f, face) in faces.iter().enumerate() {
            for &index in face {
                if index >= nv {
                    return Err(DataError::FaceIndexOutOfRange { face: f, index, vertices: nv });
                }
            }
            if face[0] == face[1] || face[0] == face[2] {
                return Err(DataError::DegenerateFace { face: f, index: face[0] });
            }
            if face[1] == face[2] {
                return Err(DataError::DegenerateFace { face: f, index: face[1] });
            }
        }
        for (e, &[a, b]) in segments.iter().enumerate() {
            if a >= nv || b >= nv || a == b {
                return Err(DataError::InvalidEdge { edge: e, a, b, vertices: nv });
            }
        }
        if let Some(mask) = &boundary_mask {
            if mask.len() != nv {
                return Err(DataError::MaskLength { expected: nv, got: mask.len() });
            }
        }

        let mut edges = BTreeSet::new();
        for face in &faces {
            for (a, b) in [(face[0], face[1]), (face[1], face[2]), (face[2], face[0])] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        for &[a, b] in &segments {
            edges.insert((a.min(b), a.max(b)));
        }
        let mut neighbors = vec![Vec::new(); nv];
        for (a, b) in edges {
            let d = distance(&coords[a], &coords[b]);
            neighbors[a].push((b, d));
            neighbors[b].push((a, d));
        }
        Ok(Self { coords, faces, segments, boundary_mask, neighbors })
    }

    /// Regular planar grid, `nx` columns by `ny` rows, split into triangles
    /// along one diagonal. Vertex `(ix, iy)` has index `iy * nx + ix`.
    pub fn planar_grid(nx: usize, ny: usize, spacing: f64) -> Self {
        let coords = (0..ny)
            .flat_map(|iy| (0..nx).map(move |ix| [ix as f64 * spacing, iy as f64 * spacing, 0.0]))
            .collect();
        let mut faces = Vec::new();
        for iy in 0..ny.saturating_sub(1) {
            for ix in 0..nx.saturating_sub(1) {
                let a = iy * nx + ix;
                let b = a + 1;
                let c = a + nx;
                let d = c + 1;
                faces.push([a, b, d]);
                faces.push([a, d, c]);
            }
        }
        Self::new(coords, faces, Vec::new(), None).expect("grid construction is valid")
    }

    /// Straight polyline of `n` vertices joined by segments.
    pub fn polyline(n: usize, spacing: f64) -> Self {
        let coords = (0..n).map(|i| [i as f64 * spacing, 0.0, 0.0]).collect();
        let segments = (1..n).map(|i| [i - 1, i]).collect();
        Self::new(coords, Vec::new(), segments, None).expect("polyline construction is valid")
    }

    pub fn with_mask(self, mask: Vec<bool>) -> Result<Self, DataError> {
        Self::new(self.coords, self.faces, self.segments, Some(mask))
    }

    pub fn n_vertices(&self) -> usize {
        self.coords.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn coords(&self) -> &[[f64; 3]] {
        &self.coords
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn segments(&self) -> &[[usize; 2]] {
        &self.segments
    }

    pub fn boundary_mask(&self) -> Option<&[bool]> {
        self.boundary_mask.as_deref()
    }

    /// True when the vertex is excluded from smoothing and summaries.
    pub fn is_masked(&self, v: usize) -> bool {
        self.boundary_mask.as_ref().is_some_and(|m| m[v])
    }

    /// Edge-connected neighbors with Euclidean edge lengths.
    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.neighbors[v]
    }

    /// Vertices touched by no edge.
    pub fn isolated_vertices(&self) -> Vec<usize> {
        (0..self.n_vertices()).filter(|&v| self.neighbors[v].is_empty()).collect()
    }

    pub fn min_edge_length(&self) -> Option<f64> {
        self.neighbors
            .iter()
            .flatten()
            .map(|&(_, d)| d)
            .fold(None, |m, d| Some(m.map_or(d, |m: f64| m.min(d))))
    }
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
}

/// One experimental condition.
#[derive(Clone, Debug, PartialEq)]
pub struct Condition {
    pub name: String,
    pub onsets: Vec<f64>,
    pub durations: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

/// Stimulus timing, one entry per condition, onsets sorted.
#[derive(Clone, Debug, PartialEq)]
pub struct EventSchedule {
    conditions: Vec<Condition>,
}

/// A single event row before grouping.
#[derive(Clone, Debug, PartialEq)]
pub struct EventRow {
    pub condition: String,
    pub onset: f64,
    pub duration: f64,
    pub amplitude: Option<f64>,
}

impl EventSchedule {
    pub fn new(conditions: Vec<Condition>) -> Result<Self, DataError> {
        if conditions.is_empty() {
            return Err(DataError::NoConditions);
        }
        let mut out = Vec::with_capacity(conditions.len());
        for c in conditions {
            let n = c.onsets.len();
            if n == 0 {
                return Err(DataError::EmptyCondition(c.name));
            }
            if c.durations.len() != n || c.amplitudes.len() != n {
                return Err(DataError::NonFiniteEvent { condition: c.name });
            }
            let mut events: Vec<(f64, f64, f64)> = (0..n)
                .map(|i| (c.onsets[i], c.durations[i], c.amplitudes[i]))
                .collect();
            for &(onset, duration, amp) in &events {
                if !(onset.is_finite() && duration.is_finite() && amp.is_finite()) {
                    return Err(DataError::NonFiniteEvent { condition: c.name });
                }
                if onset < 0.0 {
                    return Err(DataError::NegativeOnset { condition: c.name, onset });
                }
                if duration <= 0.0 {
                    return Err(DataError::NonPositiveDuration { condition: c.name, onset, duration });
                }
            }
            events.sort_by(|a, b| a.0.total_cmp(&b.0));
            if let Some(w) = events.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(DataError::RepeatedOnset { condition: c.name, onset: w[0].0 });
            }
            out.push(Condition {
                name: c.name,
                onsets: events.iter().map(|e| e.0).collect(),
                durations: events.iter().map(|e| e.1).collect(),
                amplitudes: events.iter().map(|e| e.2).collect(),
            });
        }
        Ok(Self { conditions: out })
    }

    /// Groups rows by condition name in order of first appearance. Missing
    /// amplitudes default to 1.
    pub fn from_rows(rows: Vec<EventRow>) -> Result<Self, DataError> {
        let mut conditions: Vec<Condition> = Vec::new();
        for row in rows {
            let amp = row.amplitude.unwrap_or(1.0);
            match conditions.iter_mut().find(|c| c.name == row.condition) {
                Some(c) => {
                    c.onsets.push(row.onset);
                    c.durations.push(row.duration);
                    c.amplitudes.push(amp);
                }
                None => conditions.push(Condition {
                    name: row.condition,
                    onsets: vec![row.onset],
                    durations: vec![row.duration],
                    amplitudes: vec![amp],
                }),
            }
        }
        Self::new(conditions)
    }

    pub fn conditions(&self) -> &[Condition] {
        &self.conditions
    }

    pub fn condition(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }

    /// Same schedule with every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let conditions = self
            .conditions
            .iter()
            .map(|c| Condition {
                amplitudes: c.amplitudes.iter().map(|a| a * factor).collect(),
                ..c.clone()
            })
            .collect();
        Self { conditions }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn bold_echoes_dimensions() {
        let m = Matrix::from_fn(4, 2, |i, j| (i * 2 + j) as f64 * 0.5);
        let b = BoldMatrix::new(m, 0.72, None).unwrap();
        assert_eq!((b.n_time(), b.n_vertices(), b.tr()), (4, 2, 0.72));
        assert_eq!(b.vertex_ids()[1], "v1");
    }

    #[test]
    fn bold_names_non_finite_cell() {
        let mut m = Matrix::from_fn(5, 3, |i, j| (i + j) as f64);
        m[(3, 1)] = f64::NAN;
        assert_eq!(
            BoldMatrix::new(m, 1.0, None).unwrap_err(),
            DataError::NonFinite { row: 3, col: 1 }
        );
    }

    #[test]
    fn bold_flags_constant_columns() {
        let m = Matrix::from_fn(6, 2, |i, j| if j == 0 { 3.0 } else { i as f64 });
        let b = BoldMatrix::new(m, 2.0, None).unwrap();
        assert_eq!(b.constant_columns(), &[true, false]);
    }

    #[test]
    fn bold_rejects_bad_shapes() {
        assert_eq!(
            BoldMatrix::new(Matrix::zeros(1, 3), 1.0, None).unwrap_err(),
            DataError::TooFewSamples(1)
        );
        assert_eq!(BoldMatrix::new(Matrix::zeros(3, 0), 1.0, None).unwrap_err(), DataError::NoVertices);
        assert!(matches!(
            BoldMatrix::new(Matrix::zeros(3, 1), 0.0, None),
            Err(DataError::InvalidTr(_))
        ));
    }

    #[test]
    fn grid_counts_match_enumeration() {
        let g = SurfaceMesh::planar_grid(50, 20, 2.0);
        assert_eq!(g.n_vertices(), 1000);
        assert_eq!(g.n_faces(), 2 * 49 * 19);
        // interior vertices of this triangulation have six neighbors
        assert_eq!(g.neighbors(5 * 50 + 7).len(), 6);
        assert!(g.isolated_vertices().is_empty());
    }

    #[test]
    fn mesh_rejects_bad_faces() {
        let coords = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert_eq!(
            SurfaceMesh::new(coords.clone(), vec![[0, 1, 99]], vec![], None).unwrap_err(),
            DataError::FaceIndexOutOfRange { face: 0, index: 99, vertices: 3 }
        );
        assert_eq!(
            SurfaceMesh::new(coords, vec![[0, 1, 1]], vec![], None).unwrap_err(),
            DataError::DegenerateFace { face: 0, index: 1 }
        );
    }

    #[test]
    fn mesh_reports_isolated_vertices() {
        let coords = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [5.0, 5.0, 5.0]];
        let m = SurfaceMesh::new(coords, vec![[0, 1, 2]], vec![], None).unwrap();
        assert_eq!(m.isolated_vertices(), [3]);
    }

    #[test]
    fn events_group_and_sort() {
        let rows = [(60.0, 10.0), (20.0, 10.0), (40.0, 10.0)]
            .iter()
            .map(|&(onset, duration)| EventRow {
                condition: "boxcar".to_string(),
                onset,
                duration,
                amplitude: None,
            })
            .collect();
        let s = EventSchedule::from_rows(rows).unwrap();
        let c = s.condition("boxcar").unwrap();
        assert_eq!(c.onsets, [20.0, 40.0, 60.0]);
        assert_eq!(c.amplitudes, [1.0; 3]);
    }

    #[test]
    fn events_reject_invalid() {
        assert_eq!(EventSchedule::new(vec![]).unwrap_err(), DataError::NoConditions);
        let bad = |onset: f64, duration: f64| {
            EventSchedule::from_rows(vec![EventRow {
                condition: "a".into(),
                onset,
                duration,
                amplitude: None,
            }])
        };
        assert!(matches!(bad(-1.0, 1.0), Err(DataError::NegativeOnset { .. })));
        assert!(matches!(bad(1.0, 0.0), Err(DataError::NonPositiveDuration { .. })));
    }
}

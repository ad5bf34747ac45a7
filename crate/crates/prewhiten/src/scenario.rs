//! JSON scenario specifications for simulated data.
//!
//! ```json
//! {
//!   "layout": {"kind": "table2_grid", "nx": 50, "ny": 20},
//!   "n_time": 284, "tr": 0.72, "seed": 7, "n_scans": 10
//! }
//! ```
//!
//! Layouts: `table2` (27-vertex tissue-class strip), `table2_grid` (the same
//! classes as vertical bands of a grid), or `custom` with an explicit mesh
//! and region list.

use std::path::PathBuf;

use prewhiten_core::design::{first_level_design, DesignMatrix};
use prewhiten_core::sim::{
    boxcar_events, table2_grid_scenario, table2_scenario, Region, Signal, SimScenario, DEFAULT_CUTOFF_HZ, DEFAULT_T,
    DEFAULT_TR,
};
use prewhiten_core::{HrfModel, SurfaceMesh};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSpec {
    Grid { nx: usize, ny: usize, spacing: f64 },
    Polyline { n: usize, spacing: f64 },
    File { path: PathBuf },
}

impl MeshSpec {
    pub fn build(&self) -> Result<SurfaceMesh> {
        let positive = |s: f64| {
            if s > 0.0 && s.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("mesh spacing must be positive, got {s}")))
            }
        };
        match self {
            MeshSpec::Grid { nx, ny, spacing } => {
                positive(*spacing)?;
                if nx * ny == 0 {
                    return Err(Error::Config("grid must have at least one vertex".into()));
                }
                Ok(SurfaceMesh::planar_grid(*nx, *ny, *spacing))
            }
            MeshSpec::Polyline { n, spacing } => {
                positive(*spacing)?;
                if *n == 0 {
                    return Err(Error::Config("polyline must have at least one vertex".into()));
                }
                Ok(SurfaceMesh::polyline(*n, *spacing))
            }
            MeshSpec::File { path } => io::load_mesh(path),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub name: String,
    pub vertices: Vec<usize>,
    #[serde(default)]
    pub phi: Vec<f64>,
    #[serde(default = "unit")]
    pub variance: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Layout {
    Table2,
    Table2Grid { nx: usize, ny: usize },
    Custom { mesh: MeshSpec, regions: Vec<RegionSpec> },
}

/// Adds `amplitude[r] ×` the boxcar regressor to every vertex of region `r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub amplitudes: Vec<f64>,
}

fn default_t() -> usize {
    DEFAULT_T
}

fn default_tr() -> f64 {
    DEFAULT_TR
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub layout: Layout,
    #[serde(default = "default_t")]
    pub n_time: usize,
    #[serde(default = "default_tr")]
    pub tr: f64,
    /// Falls back to the pipeline seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub n_scans: usize,
    #[serde(default)]
    pub signal: Option<SignalSpec>,
}

/// A scenario ready to generate scans.
#[derive(Clone, Debug)]
pub struct BuiltScenario {
    pub scenario: SimScenario,
    pub mesh: SurfaceMesh,
    pub n_scans: usize,
}

impl ScenarioSpec {
    pub fn new(layout: Layout, n_time: usize, seed: u64, n_scans: usize) -> Self {
        Self { layout, n_time, tr: DEFAULT_TR, seed: Some(seed), n_scans, signal: None }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// The boxcar null design for this scenario's length and TR.
    pub fn boxcar_design(&self) -> Result<DesignMatrix> {
        Ok(first_level_design(
            &boxcar_events(),
            self.n_time,
            self.tr,
            HrfModel::Canonical,
            Some(DEFAULT_CUTOFF_HZ),
            None,
        )?)
    }

    pub fn build(&self, default_seed: u64) -> Result<BuiltScenario> {
        if self.n_scans == 0 {
            return Err(Error::Config("n_scans must be at least 1".into()));
        }
        if !(self.tr > 0.0 && self.tr.is_finite()) {
            return Err(Error::Config(format!("tr must be positive, got {}", self.tr)));
        }
        let seed = self.seed.unwrap_or(default_seed);
        let (regions, mesh) = match &self.layout {
            Layout::Table2 => {
                let s = table2_scenario(self.n_time, seed)?;
                (s.scenario.regions, s.mesh)
            }
            Layout::Table2Grid { nx, ny } => {
                if nx * ny == 0 {
                    return Err(Error::Config("grid must have at least one vertex".into()));
                }
                let s = table2_grid_scenario(*nx, *ny, self.n_time, seed)?;
                (s.scenario.regions, s.mesh)
            }
            Layout::Custom { mesh, regions } => (
                regions
                    .iter()
                    .map(|r| Region { name: r.name.clone(), vertices: r.vertices.clone(), phi: r.phi.clone(), variance: r.variance })
                    .collect(),
                mesh.build()?,
            ),
        };
        let signal = match &self.signal {
            Some(s) => {
                let design = self.boxcar_design()?;
                let col = design.first_task().expect("boxcar design has a task column");
                Some(Signal { column: design.matrix().col(col).to_vec(), amplitudes: s.amplitudes.clone() })
            }
            None => None,
        };
        let scenario =
            SimScenario::new(regions, mesh.n_vertices(), mesh.boundary_mask(), self.n_time, self.tr, seed, signal)?;
        Ok(BuiltScenario { scenario, mesh, n_scans: self.n_scans })
    }
}

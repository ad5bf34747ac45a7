//! Writes simulated scans and their ground truth.

use std::path::Path;

use prewhiten_core::sim::boxcar_events;
use prewhiten_core::Matrix;
use serde::Serialize;

use crate::config::hash_json;
use crate::engine::Engine;
use crate::error::Result;
use crate::io::{self, Column, DenseFormat};
use crate::pipeline::{Manifest, OutputDir};
use crate::scenario::ScenarioSpec;

#[derive(Clone, Debug, PartialEq, Serialize)]
struct ResolvedScenario<'a> {
    #[serde(flatten)]
    spec: &'a ScenarioSpec,
    resolved_seed: u64,
}

/// Generates every scan of `spec` into `dir`: `scan_<i>` BOLD files, the
/// mesh, the boxcar events, per-vertex truth and a manifest.
pub fn simulate(spec: &ScenarioSpec, dir: &Path, format: DenseFormat, threads: Option<usize>, default_seed: u64) -> Result<Manifest> {
    let engine = Engine::new(threads)?;
    let built = spec.build(default_seed)?;
    let sc = &built.scenario;
    let mut out = OutputDir::create(dir, format)?;
    let width = built.n_scans.saturating_sub(1).to_string().len().max(3);
    for i in 0..built.n_scans {
        let bold = engine.simulate(sc, i as u64);
        out.dense(&format!("scan_{i:0width$}"), bold.data(), bold.tr(), Some(bold.vertex_ids()))?;
    }
    let mesh_path = out.path("mesh.txt");
    io::save_mesh(&mesh_path, &built.mesh)?;
    out.track_file("mesh.txt");
    let events_path = out.path("events.csv");
    io::save_events(&events_path, &boxcar_events())?;
    out.track_file("events.csv");

    let p_max = sc.regions.iter().map(|r| r.phi.len()).max().unwrap_or(0);
    let ids: Vec<String> = (0..sc.n_vertices()).map(|v| format!("v{v}")).collect();
    if p_max > 0 {
        out.dense("truth_phi", &sc.true_coefficients(p_max), sc.tr, Some(&ids))?;
    }
    let variance: Vec<f64> =
        (0..sc.n_vertices()).map(|v| sc.region_of(v).map_or(f64::NAN, |r| sc.regions[r].variance)).collect();
    out.dense("truth_variance", &Matrix::from_row_major(1, variance.len(), &variance), sc.tr, Some(&ids))?;
    let aci: Vec<f64> = (0..sc.n_vertices())
        .map(|v| {
            sc.region_of(v)
                .map_or(f64::NAN, |r| prewhiten_core::sim::analytic_aci(&sc.regions[r].phi).unwrap_or(f64::NAN))
        })
        .collect();
    let region: Vec<usize> = (0..sc.n_vertices()).map(|v| sc.region_of(v).map_or(usize::MAX, |r| r)).collect();
    out.csv("regions.csv", "vertex", &ids, &[("region", Column::Count(region)), ("analytic_aci", Column::Real(aci))])?;

    let resolved = ResolvedScenario { spec, resolved_seed: sc.seed };
    out.json("scenario.json", &resolved)?;
    out.finish(Manifest::with_hash(hash_json(&resolved), sc.seed, &["simulate"], Vec::new()))
}

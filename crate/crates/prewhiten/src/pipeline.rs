//! End-to-end first-level analysis.
//!
//! Stages run in a fixed order: load → design → OLS → ACF/ACI (pre) → AR
//! fit → regularize → whiten → GLS → ACF/ACI (post) → Ljung-Box →
//! corrections → summaries. Any stage error aborts with the stage name (and
//! the vertex, when one is at fault).

use std::path::{Path, PathBuf};

use prewhiten_core::arfit::ArField;
use prewhiten_core::design::first_level_design;
use prewhiten_core::glm::{ttest, GlmFit};
use prewhiten_core::regularize::{Regularization, SmoothingOperator};
use prewhiten_core::sim::GENERATOR;
use prewhiten_core::stats::{bonferroni, fdr_bh, DofMode, LjungBoxResult};
use prewhiten_core::whiten::{WhitenFlags, WhitenOptions};
use prewhiten_core::{BoldMatrix, DesignMatrix, Matrix, SurfaceMesh};
use serde::{Deserialize, Serialize};

use crate::config::{ArChoice, Correction, DofChoice, PipelineConfig, Strategy};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::io::{self, dense_path, Column, DenseFormat};

/// Stage names, in execution order.
pub const STAGES: [&str; 12] = [
    "load", "design", "ols", "aci_pre", "arfit", "regularize", "whiten", "gls", "aci_post", "ljung_box", "corrections",
    "summaries",
];

trait StageExt<T> {
    fn stage(self, name: &'static str) -> Result<T>;
}

impl<T, E: Into<Error>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, name: &'static str) -> Result<T> {
        self.map_err(|e| e.into().in_stage(name))
    }
}

/// Path and SHA-256 of a file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

/// Data ready for analysis.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub bold: BoldMatrix,
    pub mesh: Option<SurfaceMesh>,
    pub design: DesignMatrix,
    pub inputs: Vec<FileHash>,
}

/// Loads the inputs (or simulates scan 0 of the scenario) and builds the
/// design.
pub fn prepare(engine: &Engine, config: &PipelineConfig) -> Result<Prepared> {
    let mut inputs = Vec::new();
    let mut record = |p: &Path| -> Result<()> {
        inputs.push(FileHash { path: p.display().to_string(), sha256: io::sha256_file(p)? });
        Ok(())
    };
    let (bold, mut mesh) = match (&config.inputs.bold, &config.scenario) {
        (Some(path), _) => {
            let bold = io::load_bold(path, config.inputs.tr).stage("load")?;
            record(path).stage("load")?;
            (bold, None)
        }
        (None, Some(spec)) => {
            let built = spec.build(config.seed).stage("load")?;
            (engine.simulate(&built.scenario, 0), Some(built.mesh))
        }
        (None, None) => return Err(Error::Config("no input: give a BOLD file or a scenario".into())),
    };
    if let Some(path) = &config.inputs.mesh {
        mesh = Some(io::load_mesh(path).stage("load")?);
        record(path).stage("load")?;
    }
    if let Some(m) = &mesh {
        if m.n_vertices() != bold.n_vertices() {
            return Err(Error::Format {
                path: config.inputs.mesh.clone().unwrap_or_default(),
                line: 1,
                message: format!("mesh has {} vertices, data have {}", m.n_vertices(), bold.n_vertices()),
            }
            .in_stage("load"));
        }
    }
    let events = match &config.inputs.events {
        Some(path) => {
            let e = io::load_events(path).stage("load")?;
            record(path).stage("load")?;
            Some(e)
        }
        None if config.inputs.bold.is_none() => Some(prewhiten_core::sim::boxcar_events()),
        None => None,
    };
    let nuisance = match &config.inputs.nuisance {
        Some(path) => {
            let m = io::load_nuisance(path).stage("load")?;
            record(path).stage("load")?;
            Some(m)
        }
        None => None,
    };
    let (n, tr) = (bold.n_time(), bold.tr());
    let design = match &events {
        Some(e) => first_level_design(e, n, tr, config.hrf.model(), config.drift_cutoff_hz, nuisance.as_ref()),
        None => no_task_design(n, tr, config.drift_cutoff_hz, nuisance.as_ref()),
    }
    .stage("design")?;
    Ok(Prepared { bold, mesh, design, inputs })
}

fn no_task_design(
    n: usize,
    tr: f64,
    cutoff: Option<f64>,
    nuisance: Option<&Matrix>,
) -> std::result::Result<DesignMatrix, prewhiten_core::DesignError> {
    use prewhiten_core::design::{dct_bases, intercept_design};
    use prewhiten_core::{ColumnRole, Regressor};
    let nuis = nuisance
        .map(|m| (0..m.cols()).map(|j| Regressor::new(format!("nuisance{j}"), ColumnRole::Nuisance, m.col(j).to_vec())).collect())
        .unwrap_or_default();
    let drift = match cutoff {
        Some(c) => dct_bases(n, tr, c)?
            .into_iter()
            .enumerate()
            .map(|(k, v)| Regressor::new(format!("dct{}", k + 1), ColumnRole::Drift, v))
            .collect(),
        None => Vec::new(),
    };
    intercept_design(n, Vec::new(), Vec::new(), nuis, drift)
}

/// Mean and 95th percentile (linear interpolation) of the finite values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Distribution {
    pub mean: f64,
    pub q95: f64,
    pub n: usize,
}

impl Distribution {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return Self { mean: f64::NAN, q95: f64::NAN, n: 0 };
        }
        v.sort_by(f64::total_cmp);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        Self { mean, q95: quantile_sorted(&v, 0.95), n: v.len() }
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Everything computed before prewhitening; shared by all strategies.
#[derive(Clone, Debug)]
pub struct PreWhitening {
    pub ols: GlmFit,
    pub aci: Vec<f64>,
    pub lb: LjungBoxResult,
    /// Vertices entering tests and summaries: unmasked and successfully fit.
    pub include: Vec<bool>,
}

pub fn pre_whitening(engine: &Engine, config: &PipelineConfig, prep: &Prepared) -> Result<PreWhitening> {
    let y = prep.bold.data();
    let ols = engine.fit_ols(y, &prep.design).stage("ols")?;
    let aci = engine.aci(&ols.residuals, config.aci_lags);
    let include: Vec<bool> = (0..y.cols())
        .map(|v| !ols.failed[v] && !prep.mesh.as_ref().is_some_and(|m| m.is_masked(v)))
        .collect();
    let lb = engine
        .ljung_box(&ols.residuals, config.lb.volumes, config.lb.lags, |_| DofMode::InterceptOnly, config.lb.q, &include)
        .stage("ljung_box")?;
    Ok(PreWhitening { ols, aci, lb, include })
}

/// Result of one prewhitening strategy.
#[derive(Clone, Debug)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    pub ar: ArField,
    pub regularized: ArField,
    pub smoother: Option<SmoothingOperator>,
    pub flags: Vec<WhitenFlags>,
    pub eigendecompositions: usize,
    pub gls: GlmFit,
    pub aci: Vec<f64>,
    pub lb: LjungBoxResult,
    /// Whitening matrix of the requested vertex.
    pub dumped_whitener: Option<(usize, Matrix)>,
}

fn mean_over(values: &[f64], include: &[bool]) -> f64 {
    let (s, n) = values
        .iter()
        .zip(include)
        .filter(|(x, &i)| i && x.is_finite())
        .fold((0.0, 0usize), |(s, n), (x, _)| (s + x, n + 1));
    if n == 0 {
        1.0
    } else {
        s / n as f64
    }
}

/// Runs AR fit → regularize → whiten → GLS → post ACI → Ljung-Box for one
/// strategy.
pub fn run_strategy(
    engine: &Engine,
    config: &PipelineConfig,
    prep: &Prepared,
    pre: &PreWhitening,
    strategy: &Strategy,
    options: WhitenOptions,
) -> Result<StrategyOutcome> {
    let y = prep.bold.data();
    let (t, v) = (y.rows(), y.cols());
    let ar = engine.fit_ar(&pre.ols.residuals, strategy.ar.order()).stage("arfit")?;

    let mode = strategy.regularization.mode();
    let fallback;
    let mesh = match (&prep.mesh, mode) {
        (Some(m), _) => m,
        (None, Regularization::Local(_)) => {
            return Err(Error::Config("local regularization needs a mesh".into()).in_stage("regularize"))
        }
        (None, _) => {
            fallback = SurfaceMesh::polyline(v, 1.0);
            &fallback
        }
    };
    let smoother = match mode {
        Regularization::Local(fwhm) => Some(engine.smoother(mesh, fwhm).stage("regularize")?),
        _ => None,
    };
    let regularized = engine.regularize(&ar, mode, mesh, smoother.as_ref()).stage("regularize")?;

    let data_variance = mean_over(&pre.ols.sigma2, &pre.include);
    let whitening = engine.whitening(&regularized, t, prep.design.matrix(), options, data_variance);
    let dumped_whitener = match config.whiten.dump_vertex {
        Some(d) if d >= v => {
            return Err(Error::Config(format!("dump vertex {d} is out of range for {v} vertices")).in_stage("whiten"))
        }
        Some(d) => Some((d, whitening.operator(d).to_dense())),
        None => None,
    };
    let gls = engine.fit_gls(y, &prep.design, &whitening).stage("gls")?;
    let aci = engine.aci(&gls.residuals, config.aci_lags);

    let include: Vec<bool> = pre.include.iter().zip(&gls.failed).map(|(&i, &f)| i && !f).collect();
    let order = regularized.order.clone();
    let lb = match config.lb.dof_mode {
        DofChoice::InterceptOnly => {
            engine.ljung_box(&gls.residuals, config.lb.volumes, config.lb.lags, |_| DofMode::InterceptOnly, config.lb.q, &include)
        }
        DofChoice::ArAdjusted => engine.ljung_box(
            &gls.residuals,
            config.lb.volumes,
            config.lb.lags,
            |j| DofMode::ArAdjusted { order: order[j], t_full: t },
            config.lb.q,
            &include,
        ),
    }
    .stage("ljung_box")?;
    Ok(StrategyOutcome {
        strategy: strategy.clone(),
        ar,
        regularized,
        smoother,
        flags: whitening.flags.clone(),
        eigendecompositions: whitening.eigendecompositions(),
        gls,
        aci,
        lb,
        dumped_whitener,
    })
}

/// Task-regressor test with multiple-comparison correction.
#[derive(Clone, Debug)]
pub struct TaskTest {
    pub column: usize,
    pub name: String,
    pub pvalues: Vec<f64>,
    pub significant: Vec<bool>,
}

/// Tests the first task column of `fit`; `None` when the design has no task.
pub fn task_test(fit: &GlmFit, design: &DesignMatrix, correction: Correction, include: &[bool]) -> Result<Option<TaskTest>> {
    let Some(column) = design.first_task() else {
        return Ok(None);
    };
    let pvalues = ttest(fit, column).stage("corrections")?;
    let idx: Vec<usize> = (0..pvalues.len()).filter(|&v| include[v] && !fit.failed[v]).collect();
    let mut significant = vec![false; pvalues.len()];
    if !idx.is_empty() {
        let p: Vec<f64> = idx.iter().map(|&v| pvalues[v]).collect();
        let mask = match correction {
            Correction::Bonferroni(a) => bonferroni(&p, a),
            Correction::Fdr(q) => fdr_bh(&p, q),
        }
        .stage("corrections")?;
        for (&v, m) in idx.iter().zip(mask) {
            significant[v] = m;
        }
    }
    Ok(Some(TaskTest { column, name: design.names()[column].clone(), pvalues, significant }))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaskSummary {
    pub regressor: String,
    pub correction: Correction,
    pub n_flagged: usize,
    /// Fraction of analysed vertices flagged.
    pub fpr: f64,
    pub any_flagged: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Counts {
    pub masked: usize,
    pub constant_columns: usize,
    pub failed_fits: usize,
    pub isolated_vertices: usize,
    pub disconnected: usize,
    pub nonstationary: usize,
    pub zero_variance: usize,
    pub variance_clamped: usize,
    pub eigen_failed: usize,
    pub dof_clamped: usize,
}

/// Scan-level summary of one analysis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanSummary {
    pub n_time: usize,
    pub n_vertices: usize,
    pub n_analysed: usize,
    pub design_columns: Vec<String>,
    pub aci_pre: Distribution,
    pub aci_post: Option<Distribution>,
    pub lb_pre_significant: f64,
    pub lb_post_significant: Option<f64>,
    /// False when the post-whitening Ljung-Box degrees of freedom differ
    /// across vertices (AR-adjusted with AIC orders); the fraction is then
    /// not comparable across strategies.
    pub lb_post_comparable: bool,
    pub task: Option<TaskSummary>,
    pub eigendecompositions: usize,
    pub counts: Counts,
}

fn fraction(mask: &[bool], include: &[bool]) -> f64 {
    let n = include.iter().filter(|&&i| i).count();
    if n == 0 {
        return f64::NAN;
    }
    mask.iter().zip(include).filter(|(&m, &i)| m && i).count() as f64 / n as f64
}

fn summarize_task(t: &TaskTest, correction: Correction, include: &[bool]) -> TaskSummary {
    let n_flagged = t.significant.iter().filter(|&&s| s).count();
    TaskSummary {
        regressor: t.name.clone(),
        correction,
        n_flagged,
        fpr: fraction(&t.significant, include),
        any_flagged: n_flagged > 0,
    }
}

/// Report bundle returned by [`run_pipeline`].
#[derive(Clone, Debug)]
pub struct PipelineReport {
    pub prepared: Prepared,
    pub pre: PreWhitening,
    pub post: Option<StrategyOutcome>,
    pub task: Option<TaskTest>,
    pub summary: ScanSummary,
    pub manifest: Option<Manifest>,
}

/// Runs every stage on prepared data without touching the file system.
pub fn analyze(engine: &Engine, config: &PipelineConfig, prep: Prepared) -> Result<PipelineReport> {
    let pre = pre_whitening(engine, config, &prep)?;
    let post = if config.whiten.enabled {
        let strategy = Strategy::new(config.ar, config.regularization);
        Some(run_strategy(engine, config, &prep, &pre, &strategy, config.whiten.options())?)
    } else {
        None
    };
    let include = match &post {
        Some(p) => pre.include.iter().zip(&p.gls.failed).map(|(&i, &f)| i && !f).collect(),
        None => pre.include.clone(),
    };
    let fit = post.as_ref().map_or(&pre.ols, |p| &p.gls);
    let task = task_test(fit, &prep.design, config.correction, &include)?;

    let masked = prep.mesh.as_ref().map_or(0, |m| (0..m.n_vertices()).filter(|&v| m.is_masked(v)).count());
    let sel = |x: &[bool]| x.iter().zip(&pre.include).filter(|(&a, &i)| a && i).count();
    let mut counts = Counts {
        masked,
        constant_columns: prep.bold.constant_columns().iter().filter(|&&c| c).count(),
        failed_fits: pre.ols.failed.iter().filter(|&&f| f).count(),
        isolated_vertices: prep.mesh.as_ref().map_or(0, |m| m.isolated_vertices().len()),
        dof_clamped: sel(&pre.lb.dof_clamped),
        ..Counts::default()
    };
    if let Some(p) = &post {
        counts.failed_fits += p.gls.failed.iter().zip(&pre.ols.failed).filter(|(&g, &o)| g && !o).count();
        counts.disconnected = p.smoother.as_ref().map_or(0, |s| s.disconnected.iter().filter(|&&d| d).count());
        counts.nonstationary = sel(&p.regularized.nonstationary);
        counts.zero_variance = sel(&p.ar.zero_variance);
        counts.variance_clamped = sel(&p.flags.iter().map(|f| f.variance_clamped).collect::<Vec<_>>());
        counts.eigen_failed = sel(&p.flags.iter().map(|f| f.eigen_failed).collect::<Vec<_>>());
        counts.dof_clamped += sel(&p.lb.dof_clamped);
    }
    let pick = |x: &[f64], inc: &[bool]| -> Vec<f64> { x.iter().zip(inc).filter(|(_, &i)| i).map(|(&a, _)| a).collect() };
    let summary = ScanSummary {
        n_time: prep.bold.n_time(),
        n_vertices: prep.bold.n_vertices(),
        n_analysed: include.iter().filter(|&&i| i).count(),
        design_columns: prep.design.names().to_vec(),
        aci_pre: Distribution::of(pick(&pre.aci, &pre.include)),
        aci_post: post.as_ref().map(|p| Distribution::of(pick(&p.aci, &include))),
        lb_pre_significant: fraction(&pre.lb.significant_mask, &pre.include),
        lb_post_significant: post.as_ref().map(|p| fraction(&p.lb.significant_mask, &include)),
        lb_post_comparable: !(config.lb.dof_mode == DofChoice::ArAdjusted && matches!(config.ar, ArChoice::Aic(_))),
        task: task.as_ref().map(|t| summarize_task(t, config.correction, &include)),
        eigendecompositions: post.as_ref().map_or(0, |p| p.eigendecompositions),
        counts,
    };
    Ok(PipelineReport { prepared: prep, pre, post, task, summary, manifest: None })
}

/// Provenance record written next to the outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub generator: String,
    pub seed: u64,
    pub config_hash: String,
    pub stages: Vec<String>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

impl Manifest {
    pub fn new(config: &PipelineConfig, stages: &[&str], inputs: Vec<FileHash>) -> Self {
        Self::with_hash(config.hash(), config.seed, stages, inputs)
    }

    pub fn with_hash(config_hash: String, seed: u64, stages: &[&str], inputs: Vec<FileHash>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            core_version: prewhiten_core::VERSION.into(),
            generator: GENERATOR.into(),
            seed,
            config_hash,
            stages: stages.iter().map(|s| s.to_string()).collect(),
            inputs,
            outputs: Vec::new(),
        }
    }
}

/// Collects written files for the manifest.
pub struct OutputDir {
    dir: PathBuf,
    format: DenseFormat,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path, format: DenseFormat) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), format, written: Vec::new() })
    }

    fn track(&mut self, path: &Path) {
        let rel = path.strip_prefix(&self.dir).unwrap_or(path);
        self.written.push(rel.display().to_string());
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    /// Records a file written directly under the directory by the caller.
    pub fn track_file(&mut self, file: &str) {
        self.written.push(file.to_string());
    }

    pub fn dense(&mut self, name: &str, m: &Matrix, tr: f64, ids: Option<&[String]>) -> Result<()> {
        let p = dense_path(&self.dir, name, self.format);
        io::write_dense(&p, m, tr, ids)?;
        self.track(&p);
        Ok(())
    }

    /// A per-vertex row vector.
    pub fn row(&mut self, name: &str, values: &[f64], tr: f64, ids: &[String]) -> Result<()> {
        self.dense(name, &Matrix::from_row_major(1, values.len(), values), tr, Some(ids))
    }

    pub fn json<T: Serialize>(&mut self, file: &str, value: &T) -> Result<()> {
        let p = self.path(file);
        io::write_json(&p, value)?;
        self.track(&p);
        Ok(())
    }

    /// CSV table whose first column, named `key`, holds `ids`.
    pub fn csv(&mut self, file: &str, key: &str, ids: &[String], columns: &[(&str, Column)]) -> Result<()> {
        let p = self.path(file);
        io::write_table(&p, key, ids, columns)?;
        self.track(&p);
        Ok(())
    }

    pub fn triplets(&mut self, file: &str, op: &SmoothingOperator) -> Result<()> {
        let p = self.path(file);
        io::write_triplets(&p, op)?;
        self.track(&p);
        Ok(())
    }

    /// Hashes every written file and writes `manifest.json`.
    pub fn finish(self, mut manifest: Manifest) -> Result<Manifest> {
        manifest.outputs = self
            .written
            .iter()
            .map(|rel| Ok(FileHash { path: rel.clone(), sha256: io::sha256_file(&self.dir.join(rel))? }))
            .collect::<Result<_>>()?;
        io::write_json(&self.dir.join("manifest.json"), &manifest)?;
        Ok(manifest)
    }
}

fn lb_matrix(lb: &LjungBoxResult) -> Matrix {
    let v = lb.statistic.len();
    Matrix::from_fn(4, v, |r, j| match r {
        0 => lb.statistic[j],
        1 => lb.dof[j] as f64,
        2 => lb.pvalue[j],
        _ => f64::from(u8::from(lb.significant_mask[j])),
    })
}

fn flags_row(mask: &[bool]) -> Vec<f64> {
    mask.iter().map(|&m| f64::from(u8::from(m))).collect()
}

fn orders_row(order: &[usize]) -> Vec<f64> {
    order.iter().map(|&o| o as f64).collect()
}

fn write_report(out: &mut OutputDir, config: &PipelineConfig, r: &PipelineReport) -> Result<()> {
    let bold = &r.prepared.bold;
    let (tr, ids) = (bold.tr(), bold.vertex_ids());
    out.json("config.json", &config.canonical())?;
    out.dense("design", r.prepared.design.matrix(), tr, Some(r.prepared.design.names()))?;
    out.dense("ols_beta", &r.pre.ols.beta, tr, Some(ids))?;
    out.dense("ols_tstats", &r.pre.ols.tstats, tr, Some(ids))?;
    out.dense("ols_residuals", &r.pre.ols.residuals, tr, Some(ids))?;
    out.row("aci_pre", &r.pre.aci, tr, ids)?;
    out.dense("lb_pre", &lb_matrix(&r.pre.lb), tr, Some(ids))?;
    if let Some(p) = &r.post {
        out.dense("ar_phi", &p.ar.phi, tr, Some(ids))?;
        out.row("ar_variance", &p.ar.s, tr, ids)?;
        out.row("ar_order", &orders_row(&p.ar.order), tr, ids)?;
        out.dense("reg_phi", &p.regularized.phi, tr, Some(ids))?;
        out.row("reg_variance", &p.regularized.s, tr, ids)?;
        out.row("reg_order", &orders_row(&p.regularized.order), tr, ids)?;
        if let Some(op) = &p.smoother {
            out.triplets("smoother.triplets", op)?;
        }
        if let Some((v, w)) = &p.dumped_whitener {
            out.dense(&format!("whitener_v{v}"), w, tr, None)?;
        }
        out.dense("gls_beta", &p.gls.beta, tr, Some(ids))?;
        out.dense("gls_tstats", &p.gls.tstats, tr, Some(ids))?;
        out.dense("gls_residuals", &p.gls.residuals, tr, Some(ids))?;
        out.row("aci_post", &p.aci, tr, ids)?;
        out.dense("lb_post", &lb_matrix(&p.lb), tr, Some(ids))?;
    }
    if let Some(t) = &r.task {
        out.row("task_pvalues", &t.pvalues, tr, ids)?;
        out.row("task_significant", &flags_row(&t.significant), tr, ids)?;
    }
    if config.output.vertex_csv {
        let mut cols = vec![
            ("analysed", Column::Flag(r.pre.include.clone())),
            ("aci_pre", Column::Real(r.pre.aci.clone())),
            ("lb_pre_q", Column::Real(r.pre.lb.statistic.clone())),
            ("lb_pre_p", Column::Real(r.pre.lb.pvalue.clone())),
            ("lb_pre_significant", Column::Flag(r.pre.lb.significant_mask.clone())),
        ];
        if let Some(p) = &r.post {
            cols.extend([
                ("ar_order", Column::Count(p.ar.order.clone())),
                ("reg_order", Column::Count(p.regularized.order.clone())),
                ("reg_variance", Column::Real(p.regularized.s.clone())),
                ("nonstationary", Column::Flag(p.regularized.nonstationary.clone())),
                ("aci_post", Column::Real(p.aci.clone())),
                ("lb_post_q", Column::Real(p.lb.statistic.clone())),
                ("lb_post_dof", Column::Count(p.lb.dof.clone())),
                ("lb_post_p", Column::Real(p.lb.pvalue.clone())),
                ("lb_post_significant", Column::Flag(p.lb.significant_mask.clone())),
            ]);
        }
        if let Some(t) = &r.task {
            cols.push(("task_p", Column::Real(t.pvalues.clone())));
            cols.push(("task_significant", Column::Flag(t.significant.clone())));
        }
        out.csv("vertices.csv", "vertex", ids, &cols)?;
    }
    out.json("summary.json", &r.summary)
}

/// Runs the full pipeline. With an output directory, every stage output,
/// the canonical config and a manifest are written there.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport> {
    config.validate()?;
    let engine = Engine::new(config.threads)?;
    let prep = prepare(&engine, config)?;
    let inputs = prep.inputs.clone();
    let mut report = analyze(&engine, config, prep)?;
    if let Some(dir) = &config.output.dir {
        let mut out = OutputDir::create(dir, config.output.format).stage("summaries")?;
        write_report(&mut out, config, &report).stage("summaries")?;
        let stages: Vec<&str> = if config.whiten.enabled {
            STAGES.to_vec()
        } else {
            STAGES.iter().copied().filter(|s| !matches!(*s, "arfit" | "regularize" | "whiten" | "gls" | "aci_post")).collect()
        };
        report.manifest = Some(out.finish(Manifest::new(config, &stages, inputs)).stage("summaries")?);
    }
    Ok(report)
}


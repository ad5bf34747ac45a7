//! Residual diagnostics: autocorrelation index and Ljung-Box tests for an
//! existing residual matrix.

use std::path::{Path, PathBuf};

use prewhiten_core::stats::DofMode;
use serde::{Deserialize, Serialize};

use crate::config::{hash_json, DofChoice, LbConfig};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::io::{self, Column, DenseFormat};
use crate::pipeline::{Distribution, FileHash, Manifest, OutputDir};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub residuals: PathBuf,
    /// Mesh whose mask excludes vertices from the summary and FDR family.
    #[serde(default)]
    pub mesh: Option<PathBuf>,
    /// 1×V matrix of fitted AR orders, used by the AR-adjusted dof mode.
    #[serde(default)]
    pub orders: Option<PathBuf>,
    /// Single AR order applied to every vertex when no orders file is given.
    #[serde(default)]
    pub order: Option<usize>,
    #[serde(default)]
    pub lb: LbConfig,
    #[serde(default)]
    pub aci_lags: Option<usize>,
    #[serde(skip)]
    pub output: Option<PathBuf>,
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl DiagnoseConfig {
    pub fn new(residuals: PathBuf) -> Self {
        Self {
            residuals,
            mesh: None,
            orders: None,
            order: None,
            lb: LbConfig::default(),
            aci_lags: None,
            output: None,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lb.lags == 0 || self.lb.volumes <= self.lb.lags {
            return Err(Error::Config(format!(
                "Ljung-Box needs 1 <= lags < volumes, got lags {} and volumes {}",
                self.lb.lags, self.lb.volumes
            )));
        }
        if !(self.lb.q > 0.0 && self.lb.q < 1.0) {
            return Err(Error::Config(format!("FDR level must be in (0, 1), got {}", self.lb.q)));
        }
        if self.aci_lags == Some(0) {
            return Err(Error::Config("aci_lags must be at least 1".into()));
        }
        if self.lb.dof_mode == DofChoice::ArAdjusted && self.orders.is_none() && self.order.is_none() {
            return Err(Error::Config("the ar-adjusted dof mode needs --order or --orders".into()));
        }
        if let Some(p) = self.order {
            if p > prewhiten_core::arfit::AIC_MAX_ORDER {
                return Err(Error::Config(format!("AR order {p} exceeds the maximum of 10")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnoseSummary {
    pub n_time: usize,
    pub n_vertices: usize,
    pub n_analysed: usize,
    pub mean_aci: f64,
    pub q95_aci: f64,
    pub lb_significant: usize,
    pub lb_significant_pct: f64,
    pub dof_clamped: usize,
}

#[derive(Clone, Debug)]
pub struct Diagnosis {
    pub aci: Vec<f64>,
    pub lb: prewhiten_core::stats::LjungBoxResult,
    pub include: Vec<bool>,
    pub summary: DiagnoseSummary,
    pub manifest: Option<Manifest>,
}

fn read_orders(path: &Path, n: usize) -> Result<Vec<usize>> {
    let file = io::read_dense(path)?;
    let m = &file.matrix;
    if m.rows() != 1 || m.cols() != n {
        return Err(Error::Format {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected a 1x{n} order row, found {}x{}", m.rows(), m.cols()),
        });
    }
    (0..n)
        .map(|j| {
            let x = m[(0, j)];
            if x.is_finite() && x >= 0.0 && x.fract() == 0.0 {
                Ok(x as usize)
            } else {
                Err(Error::Format {
                    path: path.to_path_buf(),
                    line: 2,
                    message: format!("order {x} at column {j} is not a non-negative integer"),
                })
            }
        })
        .collect()
}

pub fn diagnose(config: &DiagnoseConfig) -> Result<Diagnosis> {
    config.validate()?;
    let engine = Engine::new(config.threads)?;
    let file = io::read_dense(&config.residuals)?;
    let r = &file.matrix;
    let (t, n) = (r.rows(), r.cols());
    let mut inputs = vec![FileHash { path: config.residuals.display().to_string(), sha256: io::sha256_file(&config.residuals)? }];

    let mut include = vec![true; n];
    if let Some(path) = &config.mesh {
        let mesh = io::load_mesh(path)?;
        if mesh.n_vertices() != n {
            return Err(Error::Format {
                path: path.clone(),
                line: 1,
                message: format!("mesh has {} vertices but the residuals have {n} columns", mesh.n_vertices()),
            });
        }
        for (v, inc) in include.iter_mut().enumerate() {
            *inc = !mesh.is_masked(v);
        }
        inputs.push(FileHash { path: path.display().to_string(), sha256: io::sha256_file(path)? });
    }
    let orders = match &config.orders {
        Some(path) => {
            inputs.push(FileHash { path: path.display().to_string(), sha256: io::sha256_file(path)? });
            read_orders(path, n)?
        }
        None => vec![config.order.unwrap_or(0); n],
    };
    let aci = engine.aci(r, config.aci_lags);
    for (inc, a) in include.iter_mut().zip(&aci) {
        *inc &= a.is_finite();
    }
    let dof_mode = config.lb.dof_mode;
    let lb = engine.ljung_box(
        r,
        config.lb.volumes,
        config.lb.lags,
        |v| match dof_mode {
            DofChoice::InterceptOnly => DofMode::InterceptOnly,
            DofChoice::ArAdjusted => DofMode::ArAdjusted { order: orders[v], t_full: t },
        },
        config.lb.q,
        &include,
    )?;

    let n_analysed = include.iter().filter(|&&i| i).count();
    let dist = Distribution::of(aci.iter().zip(&include).filter(|(_, &i)| i).map(|(&a, _)| a));
    let sig = lb.significant_mask.iter().zip(&include).filter(|(&s, &i)| s && i).count();
    let summary = DiagnoseSummary {
        n_time: t,
        n_vertices: n,
        n_analysed,
        mean_aci: dist.mean,
        q95_aci: dist.q95,
        lb_significant: sig,
        lb_significant_pct: 100.0 * sig as f64 / n_analysed.max(1) as f64,
        dof_clamped: lb.dof_clamped.iter().filter(|&&c| c).count(),
    };
    let mut diagnosis = Diagnosis { aci, lb, include, summary, manifest: None };

    if let Some(dir) = &config.output {
        let mut out = OutputDir::create(dir, DenseFormat::Text)?;
        let ids = file.ids.clone().unwrap_or_else(|| (0..n).map(|v| format!("v{v}")).collect());
        let d = &diagnosis;
        let cols = [
            ("included", Column::Flag(d.include.clone())),
            ("aci", Column::Real(d.aci.clone())),
            ("lb_q", Column::Real(d.lb.statistic.clone())),
            ("lb_dof", Column::Count(d.lb.dof.clone())),
            ("lb_p", Column::Real(d.lb.pvalue.clone())),
            ("lb_significant", Column::Flag(d.lb.significant_mask.clone())),
        ];
        out.csv("diagnostics.csv", "vertex", &ids, &cols)?;
        out.json("diagnostics.json", &d.summary)?;
        out.json("config.json", config)?;
        let manifest = Manifest::with_hash(hash_json(config), 0, &["aci", "ljung_box"], inputs);
        diagnosis.manifest = Some(out.finish(manifest)?);
    }
    Ok(diagnosis)
}

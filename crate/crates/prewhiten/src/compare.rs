//! Side-by-side evaluation of prewhitening strategies.
//!
//! Each scan is loaded (or simulated) once and fit by OLS once; every
//! strategy then starts from the same residuals, so the rows of one
//! strategy do not depend on which other strategies are run.

use prewhiten_core::stats::{agresti_coull, summarize_error_rates};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::io::Column;
use crate::pipeline::{pre_whitening, prepare, run_strategy, task_test, Distribution, Manifest, OutputDir, Prepared};

/// One strategy on one scan.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub strategy: String,
    pub scan: usize,
    pub mean_aci: f64,
    pub q95_aci: f64,
    /// Percentage of analysed vertices with significant post-whitening
    /// autocorrelation (Ljung-Box, FDR).
    pub lb_significant_pct: f64,
    /// Fraction of analysed vertices flagged for the task regressor.
    pub fpr: f64,
    /// 1 when any vertex was flagged, else 0; averaged over scans this is
    /// the family-wise error rate.
    pub fwer: f64,
}

/// Per-strategy aggregate over all scans.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrategyAggregate {
    pub strategy: String,
    pub n_scans: usize,
    pub mean_aci: f64,
    pub q95_aci: f64,
    pub lb_significant_pct: f64,
    pub mean_fpr: f64,
    pub fwer: f64,
    pub fwer_ci_low: f64,
    pub fwer_ci_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    /// Strategy-major order: all scans of the first strategy, then the next.
    pub rows: Vec<ComparisonRow>,
    pub aggregates: Vec<StrategyAggregate>,
    /// Pre-whitening ACI per scan, for reference.
    pub pre_mean_aci: Vec<f64>,
    pub manifest: Option<Manifest>,
}

impl Comparison {
    pub fn aggregate(&self, strategy: &str) -> Option<&StrategyAggregate> {
        self.aggregates.iter().find(|a| a.strategy == strategy)
    }
}

fn pct(mask: &[bool], include: &[bool]) -> f64 {
    let n = include.iter().filter(|&&i| i).count();
    100.0 * mask.iter().zip(include).filter(|(&m, &i)| m && i).count() as f64 / n.max(1) as f64
}

/// Loads the scan list: the BOLD input, or every scan of the scenario.
fn scans<'a>(engine: &'a Engine, config: &PipelineConfig) -> Result<(usize, Box<dyn Fn(usize) -> Result<Prepared> + 'a>)> {
    let first = prepare(engine, config)?;
    match (&config.inputs.bold, &config.scenario) {
        (None, Some(spec)) => {
            let built = spec.build(config.seed)?;
            let n = built.n_scans;
            Ok((
                n,
                Box::new(move |i| {
                    if i == 0 {
                        return Ok(first.clone());
                    }
                    Ok(Prepared { bold: engine.simulate(&built.scenario, i as u64), ..first.clone() })
                }),
            ))
        }
        _ => Ok((1, Box::new(move |_| Ok(first.clone())))),
    }
}

/// Runs every strategy on every scan.
pub fn compare_strategies(config: &PipelineConfig) -> Result<Comparison> {
    config.validate()?;
    if config.strategies.len() < 2 {
        return Err(Error::Config(format!("compare needs at least 2 strategies, got {}", config.strategies.len())));
    }
    let engine = Engine::new(config.threads)?;
    let (n_scans, load) = scans(&engine, config)?;
    let options = config.whiten.options();
    let k = config.strategies.len();

    let mut rows: Vec<Vec<ComparisonRow>> = vec![Vec::with_capacity(n_scans); k];
    let mut masks: Vec<Vec<Vec<bool>>> = vec![Vec::with_capacity(n_scans); k];
    let mut acis: Vec<Vec<f64>> = vec![Vec::new(); k];
    let mut pre_mean_aci = Vec::with_capacity(n_scans);
    let mut inputs = Vec::new();
    for scan in 0..n_scans {
        let prep = load(scan)?;
        if scan == 0 {
            inputs = prep.inputs.clone();
        }
        let pre = pre_whitening(&engine, config, &prep)?;
        pre_mean_aci.push(Distribution::of(pre.aci.iter().zip(&pre.include).filter(|(_, &i)| i).map(|(&a, _)| a)).mean);
        for (s, strategy) in config.strategies.iter().enumerate() {
            let out = run_strategy(&engine, config, &prep, &pre, strategy, options)?;
            let include: Vec<bool> = pre.include.iter().zip(&out.gls.failed).map(|(&i, &f)| i && !f).collect();
            let aci: Vec<f64> = out.aci.iter().zip(&include).filter(|(_, &i)| i).map(|(&a, _)| a).collect();
            let dist = Distribution::of(aci.iter().copied());
            acis[s].extend(aci);
            let task = task_test(&out.gls, &prep.design, config.correction, &include)?;
            let flagged: Vec<bool> = match &task {
                Some(t) => t.significant.iter().zip(&include).filter(|(_, &i)| i).map(|(&m, _)| m).collect(),
                None => vec![false; include.iter().filter(|&&i| i).count()],
            };
            let n_flag = flagged.iter().filter(|&&f| f).count();
            rows[s].push(ComparisonRow {
                strategy: strategy.label(),
                scan,
                mean_aci: dist.mean,
                q95_aci: dist.q95,
                lb_significant_pct: pct(&out.lb.significant_mask, &include),
                fpr: n_flag as f64 / flagged.len().max(1) as f64,
                fwer: if n_flag > 0 { 1.0 } else { 0.0 },
            });
            masks[s].push(flagged);
        }
    }

    let mut aggregates = Vec::with_capacity(k);
    for (s, strategy) in config.strategies.iter().enumerate() {
        let r = &rows[s];
        let mean = |f: fn(&ComparisonRow) -> f64| r.iter().map(f).sum::<f64>() / r.len() as f64;
        let (fwer, lo, hi, mean_fpr) = if masks[s].iter().all(|m| !m.is_empty()) {
            let e = summarize_error_rates(&masks[s])?;
            (e.fwer, e.ci_low, e.ci_high, e.mean_fpr())
        } else {
            let x = r.iter().filter(|row| row.fwer > 0.0).count() as u64;
            let (lo, hi) = agresti_coull(x, r.len() as u64, 0.95)?;
            (x as f64 / r.len() as f64, lo, hi, mean(|row| row.fpr))
        };
        aggregates.push(StrategyAggregate {
            strategy: strategy.label(),
            n_scans,
            mean_aci: Distribution::of(acis[s].iter().copied()).mean,
            q95_aci: Distribution::of(acis[s].iter().copied()).q95,
            lb_significant_pct: mean(|row| row.lb_significant_pct),
            mean_fpr,
            fwer,
            fwer_ci_low: lo,
            fwer_ci_high: hi,
        });
    }
    let mut comparison =
        Comparison { rows: rows.into_iter().flatten().collect(), aggregates, pre_mean_aci, manifest: None };

    if let Some(dir) = &config.output.dir {
        let mut out = OutputDir::create(dir, config.output.format)?;
        out.json("config.json", &config.canonical())?;
        write_rows_csv(&mut out, &comparison.rows)?;
        out.json("comparison.json", &comparison)?;
        comparison.manifest = Some(out.finish(Manifest::new(config, &["compare"], inputs))?);
    }
    Ok(comparison)
}

fn write_rows_csv(out: &mut OutputDir, rows: &[ComparisonRow]) -> Result<()> {
    let ids: Vec<String> = rows.iter().map(|r| r.strategy.clone()).collect();
    let cols = [
        ("scan", Column::Count(rows.iter().map(|r| r.scan).collect())),
        ("mean_aci", Column::Real(rows.iter().map(|r| r.mean_aci).collect())),
        ("q95_aci", Column::Real(rows.iter().map(|r| r.q95_aci).collect())),
        ("lb_significant_pct", Column::Real(rows.iter().map(|r| r.lb_significant_pct).collect())),
        ("fpr", Column::Real(rows.iter().map(|r| r.fpr).collect())),
        ("fwer", Column::Real(rows.iter().map(|r| r.fwer).collect())),
    ];
    out.csv("comparison.csv", "strategy", &ids, &cols)
}

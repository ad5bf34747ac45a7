//! Command-line interface. Settings come from defaults, then `--config`,
//! then individual flags.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::compare::compare_strategies;
use crate::config::{ArChoice, Correction, DofChoice, Hrf, PipelineConfig, PrecisionChoice, RegChoice, Strategy};
use crate::diagnose::{diagnose, DiagnoseConfig};
use crate::error::{exit, Error, Result};
use crate::io::DenseFormat;
use crate::pipeline::run_pipeline;
use crate::scenario::ScenarioSpec;
use crate::simulate::simulate;

#[derive(Debug, Parser)]
#[command(name = "prewhiten", version, about = "Autoregressive prewhitening for surface fMRI")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one prewhitening strategy and write the per-stage outputs.
    Fit(Box<PipelineArgs>),
    /// Run several strategies on the same scans and tabulate them.
    Compare(Box<PipelineArgs>),
    /// Generate simulated scans with known autocorrelation.
    Simulate(SimulateArgs),
    /// Autocorrelation diagnostics for an existing residual matrix.
    Diagnose(DiagnoseArgs),
}

fn parse_format(s: &str) -> Result<DenseFormat> {
    match s {
        "text" | "txt" => Ok(DenseFormat::Text),
        "binary" | "bmat" => Ok(DenseFormat::Binary),
        _ => Err(Error::Config(format!("unknown format {s:?} (text, binary)"))),
    }
}

#[derive(Debug, Default, Args)]
pub struct PipelineArgs {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// BOLD matrix (time × vertices).
    #[arg(long)]
    pub bold: Option<PathBuf>,
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Event table: condition, onset, duration[, amplitude].
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Nuisance regressors (time × k).
    #[arg(long)]
    pub nuisance: Option<PathBuf>,
    /// Sampling interval in seconds, overriding the BOLD file.
    #[arg(long)]
    pub tr: Option<f64>,
    /// Simulation scenario used when no BOLD file is given.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// canonical, +td or +td+dd.
    #[arg(long)]
    pub hrf: Option<Hrf>,
    /// High-pass cutoff in Hz for the DCT drift basis.
    #[arg(long, conflicts_with = "no_drift")]
    pub cutoff: Option<f64>,
    /// Omit drift regressors.
    #[arg(long)]
    pub no_drift: bool,
    /// AR order: a number, `aic` or `aic:<max>`.
    #[arg(long)]
    pub order: Option<ArChoice>,
    /// none, global or local[:<fwhm mm>].
    #[arg(long)]
    pub regularization: Option<RegChoice>,
    /// Ljung-Box lags.
    #[arg(long)]
    pub lags: Option<usize>,
    /// Leading volumes used by the Ljung-Box test.
    #[arg(long)]
    pub volumes: Option<usize>,
    /// Ljung-Box degrees of freedom: intercept or ar.
    #[arg(long)]
    pub dof_mode: Option<DofChoice>,
    /// FDR level of the Ljung-Box significance masks.
    #[arg(long)]
    pub lb_q: Option<f64>,
    /// Task correction: bonferroni[:alpha] or fdr[:q].
    #[arg(long)]
    pub correction: Option<Correction>,
    /// Precision form: poly or literal.
    #[arg(long)]
    pub precision: Option<PrecisionChoice>,
    /// Use W = U D Uᵀ instead of the symmetric square root.
    #[arg(long)]
    pub appendix_literal: bool,
    /// Stop after the pre-whitening diagnostics.
    #[arg(long)]
    pub no_whiten: bool,
    /// Write the whitening matrix of this vertex.
    #[arg(long)]
    pub dump_whitener: Option<usize>,
    /// Lags summed in the autocorrelation index (default: all).
    #[arg(long)]
    pub aci_lags: Option<usize>,
    /// Output matrix format: text or binary.
    #[arg(long, value_parser = parse_format)]
    pub format: Option<DenseFormat>,
    /// Also write per-vertex CSV tables.
    #[arg(long)]
    pub vertex_csv: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Strategy for `compare`, e.g. `6/local:5`; repeatable.
    #[arg(long = "strategy")]
    pub strategies: Vec<Strategy>,
}

impl PipelineArgs {
    /// Resolves defaults, the configuration file and the flags.
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value.clone() {
                    $field = v;
                }
            };
        }
        macro_rules! set_opt {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value.clone() {
                    $field = Some(v);
                }
            };
        }
        set_opt!(c.inputs.bold, self.bold);
        set_opt!(c.inputs.mesh, self.mesh);
        set_opt!(c.inputs.events, self.events);
        set_opt!(c.inputs.nuisance, self.nuisance);
        set_opt!(c.inputs.tr, self.tr);
        if let Some(path) = &self.scenario {
            c.scenario = Some(ScenarioSpec::load(path)?);
        }
        set!(c.hrf, self.hrf);
        set_opt!(c.drift_cutoff_hz, self.cutoff);
        if self.no_drift {
            c.drift_cutoff_hz = None;
        }
        set!(c.ar, self.order);
        set!(c.regularization, self.regularization);
        set!(c.lb.lags, self.lags);
        set!(c.lb.volumes, self.volumes);
        set!(c.lb.dof_mode, self.dof_mode);
        set!(c.lb.q, self.lb_q);
        set!(c.correction, self.correction);
        set!(c.whiten.precision, self.precision);
        c.whiten.appendix_literal |= self.appendix_literal;
        if self.no_whiten {
            c.whiten.enabled = false;
        }
        set_opt!(c.whiten.dump_vertex, self.dump_whitener);
        set_opt!(c.aci_lags, self.aci_lags);
        set!(c.output.format, self.format);
        c.output.vertex_csv |= self.vertex_csv;
        set_opt!(c.output.dir, self.out);
        set_opt!(c.threads, self.threads);
        set!(c.seed, self.seed);
        if !self.strategies.is_empty() {
            c.strategies = self.strategies.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the scenario's number of scans.
    #[arg(long)]
    pub scans: Option<usize>,
    #[arg(long, value_parser = parse_format, default_value = "text")]
    pub format: DenseFormat,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Residual matrix (time × vertices).
    #[arg(long)]
    pub residuals: PathBuf,
    /// Mesh whose mask excludes vertices.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// AR order applied to every vertex (for `--dof-mode ar`).
    #[arg(long, conflicts_with = "orders")]
    pub order: Option<usize>,
    /// 1 × V matrix of per-vertex AR orders.
    #[arg(long)]
    pub orders: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub lags: usize,
    #[arg(long, default_value_t = 100)]
    pub volumes: usize,
    #[arg(long, default_value = "intercept")]
    pub dof_mode: DofChoice,
    #[arg(long, default_value_t = 0.05)]
    pub q: f64,
    #[arg(long)]
    pub aci_lags: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

impl DiagnoseArgs {
    pub fn resolve(&self) -> DiagnoseConfig {
        let mut c = DiagnoseConfig::new(self.residuals.clone());
        c.mesh = self.mesh.clone();
        c.order = self.order;
        c.orders = self.orders.clone();
        c.lb.lags = self.lags;
        c.lb.volumes = self.volumes;
        c.lb.dof_mode = self.dof_mode;
        c.lb.q = self.q;
        c.aci_lags = self.aci_lags;
        c.output = self.out.clone();
        c.threads = self.threads;
        c
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    let mut stdout = std::io::stdout().lock();
    // A closed stdout (e.g. piped into `head`) is not a pipeline failure.
    let _ = writeln!(stdout, "{text}");
    Ok(())
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Fit(args) => {
            let config = args.resolve()?;
            let report = run_pipeline(&config)?;
            print_json(&report.summary)
        }
        Command::Compare(args) => {
            let config = args.resolve()?;
            let comparison = compare_strategies(&config)?;
            print_json(&comparison.aggregates)
        }
        Command::Simulate(args) => {
            let mut spec = ScenarioSpec::load(&args.scenario)?;
            if let Some(seed) = args.seed {
                spec.seed = Some(seed);
            }
            if let Some(n) = args.scans {
                spec.n_scans = n;
            }
            let manifest = simulate(&spec, &args.out, args.format, args.threads, 0)?;
            print_json(&manifest)
        }
        Command::Diagnose(args) => {
            let diagnosis = diagnose(&args.resolve())?;
            print_json(&diagnosis.summary)
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::CONFIG } else { exit::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => exit::SUCCESS,
        Err(e) => {
            eprintln!("prewhiten: {e}");
            e.exit_code()
        }
    }
}

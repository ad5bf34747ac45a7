//! Declarative pipeline configuration. Values come from defaults, then a
//! JSON file, then command-line flags, each overriding the previous.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use prewhiten_core::arfit::{ArOrder, AIC_MAX_ORDER};
use prewhiten_core::regularize::Regularization;
use prewhiten_core::sim::DEFAULT_CUTOFF_HZ;
use prewhiten_core::whiten::{PrecisionForm, RootMode, WhitenOptions};
use prewhiten_core::HrfModel;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::DenseFormat;
use crate::scenario::ScenarioSpec;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub bold: Option<PathBuf>,
    pub mesh: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub nuisance: Option<PathBuf>,
    /// Overrides the sampling interval stored in the BOLD file.
    pub tr: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hrf {
    #[default]
    #[serde(rename = "canonical")]
    Canonical,
    #[serde(rename = "+td")]
    Temporal,
    #[serde(rename = "+td+dd")]
    TemporalDispersion,
}

impl Hrf {
    pub fn model(self) -> HrfModel {
        match self {
            Hrf::Canonical => HrfModel::Canonical,
            Hrf::Temporal => HrfModel::WithTemporal,
            Hrf::TemporalDispersion => HrfModel::WithTemporalAndDispersion,
        }
    }
}

impl FromStr for Hrf {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" => Ok(Hrf::Canonical),
            "+td" | "td" => Ok(Hrf::Temporal),
            "+td+dd" | "td+dd" => Ok(Hrf::TemporalDispersion),
            _ => Err(Error::Config(format!("unknown HRF model {s:?} (canonical, +td, +td+dd)"))),
        }
    }
}

/// AR model order: fixed, or AIC-selected up to a maximum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArChoice {
    Order(usize),
    Aic(usize),
}

impl Default for ArChoice {
    fn default() -> Self {
        ArChoice::Order(6)
    }
}

impl ArChoice {
    pub fn order(self) -> ArOrder {
        match self {
            ArChoice::Order(p) => ArOrder::Fixed(p),
            ArChoice::Aic(max) => ArOrder::Aic { max },
        }
    }
}

impl fmt::Display for ArChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArChoice::Order(p) => write!(f, "AR({p})"),
            ArChoice::Aic(m) => write!(f, "AR(AIC≤{m})"),
        }
    }
}

impl FromStr for ArChoice {
    type Err = Error;
    /// `6`, `aic`, or `aic:8`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad AR order {s:?} (an integer, `aic` or `aic:<max>`)"));
        match s.split_once(':') {
            None if s == "aic" => Ok(ArChoice::Aic(AIC_MAX_ORDER)),
            None => s.parse().map(ArChoice::Order).map_err(|_| bad()),
            Some(("aic", m)) => m.parse().map(ArChoice::Aic).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

/// Spatial regularization of the AR parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegChoice {
    None,
    Global,
    /// Geodesic Gaussian smoothing with this FWHM in mm.
    Local(f64),
}

impl Default for RegChoice {
    fn default() -> Self {
        RegChoice::Local(5.0)
    }
}

impl RegChoice {
    pub fn mode(self) -> Regularization {
        match self {
            RegChoice::None => Regularization::None,
            RegChoice::Global => Regularization::Global,
            RegChoice::Local(f) => Regularization::Local(f),
        }
    }
}

impl fmt::Display for RegChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegChoice::None => write!(f, "unregularized"),
            RegChoice::Global => write!(f, "global"),
            RegChoice::Local(w) => write!(f, "local {w}mm"),
        }
    }
}

impl FromStr for RegChoice {
    type Err = Error;
    /// `none`, `global`, `local` (5 mm) or `local:<fwhm>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "none" => Ok(RegChoice::None),
            None if s == "global" => Ok(RegChoice::Global),
            None if s == "local" => Ok(RegChoice::default()),
            Some(("local", w)) => w
                .parse()
                .map(RegChoice::Local)
                .map_err(|_| Error::Config(format!("bad FWHM {w:?}"))),
            _ => Err(Error::Config(format!("unknown regularization {s:?} (none, global, local[:fwhm])"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DofChoice {
    /// `h − 1`.
    #[default]
    InterceptOnly,
    /// `h − round(p·n/T) − 1` with each vertex's AR order.
    ArAdjusted,
}

impl FromStr for DofChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intercept" | "intercept_only" => Ok(DofChoice::InterceptOnly),
            "ar" | "ar_adjusted" => Ok(DofChoice::ArAdjusted),
            _ => Err(Error::Config(format!("unknown dof mode {s:?} (intercept, ar)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbConfig {
    pub lags: usize,
    /// Leading volumes used for the test.
    pub volumes: usize,
    pub dof_mode: DofChoice,
    /// FDR level for the significance masks.
    pub q: f64,
}

impl Default for LbConfig {
    fn default() -> Self {
        Self { lags: 20, volumes: 100, dof_mode: DofChoice::InterceptOnly, q: 0.05 }
    }
}

/// Multiple-comparison correction for the task test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    Bonferroni(f64),
    Fdr(f64),
}

impl Default for Correction {
    fn default() -> Self {
        Correction::Bonferroni(0.05)
    }
}

impl Correction {
    pub fn level(self) -> f64 {
        match self {
            Correction::Bonferroni(a) | Correction::Fdr(a) => a,
        }
    }
}

impl FromStr for Correction {
    type Err = Error;
    /// `bonferroni[:alpha]` or `fdr[:q]`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, level) = s.split_once(':').unwrap_or((s, "0.05"));
        let level: f64 = level.parse().map_err(|_| Error::Config(format!("bad level {level:?}")))?;
        match kind {
            "bonferroni" => Ok(Correction::Bonferroni(level)),
            "fdr" => Ok(Correction::Fdr(level)),
            _ => Err(Error::Config(format!("unknown correction {kind:?} (bonferroni, fdr)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionChoice {
    #[default]
    ArPolynomial,
    Literal,
}

impl FromStr for PrecisionChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ar_polynomial" | "poly" => Ok(PrecisionChoice::ArPolynomial),
            "literal" => Ok(PrecisionChoice::Literal),
            _ => Err(Error::Config(format!("unknown precision form {s:?} (poly, literal)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WhitenConfig {
    /// When false the pipeline stops after the pre-whitening diagnostics and
    /// tests the task on the OLS fit.
    pub enabled: bool,
    pub precision: PrecisionChoice,
    /// Use `W = U D Uᵀ` instead of the symmetric square root.
    pub appendix_literal: bool,
    /// Write the whitening matrix of this vertex as a dense file.
    pub dump_vertex: Option<usize>,
}

impl Default for WhitenConfig {
    fn default() -> Self {
        Self { enabled: true, precision: PrecisionChoice::ArPolynomial, appendix_literal: false, dump_vertex: None }
    }
}

impl WhitenConfig {
    pub fn options(&self) -> WhitenOptions {
        WhitenOptions {
            form: match self.precision {
                PrecisionChoice::ArPolynomial => PrecisionForm::ArPolynomial,
                PrecisionChoice::Literal => PrecisionForm::Literal,
            },
            root: if self.appendix_literal { RootMode::AppendixLiteral } else { RootMode::SymmetricRoot },
            keep_full: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub format: DenseFormat,
    /// Also write per-vertex CSV tables.
    pub vertex_csv: bool,
}

/// One prewhitening strategy of a comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Strategy {
    #[serde(default)]
    pub name: Option<String>,
    pub ar: ArChoice,
    pub regularization: RegChoice,
}

impl Strategy {
    pub fn new(ar: ArChoice, regularization: RegChoice) -> Self {
        Self { name: None, ar, regularization }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| format!("{} {}", self.ar, self.regularization))
    }
}

impl FromStr for Strategy {
    type Err = Error;
    /// `<order>/<regularization>`, e.g. `6/local:5` or `aic/global`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, r) = s
            .split_once('/')
            .ok_or_else(|| Error::Config(format!("strategy {s:?} must look like <order>/<regularization>")))?;
        Ok(Strategy::new(a.parse()?, r.parse()?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Inputs,
    pub hrf: Hrf,
    /// DCT high-pass cutoff; `None` disables drift regressors.
    pub drift_cutoff_hz: Option<f64>,
    pub ar: ArChoice,
    pub regularization: RegChoice,
    pub lb: LbConfig,
    pub correction: Correction,
    pub whiten: WhitenConfig,
    /// Lags summed in the ACI; `None` uses every lag.
    pub aci_lags: Option<usize>,
    pub output: OutputConfig,
    /// Worker threads; `None` uses the available parallelism. Not part of
    /// the configuration hash since results do not depend on it.
    pub threads: Option<usize>,
    pub seed: u64,
    /// Simulated input used when no BOLD file is given.
    pub scenario: Option<ScenarioSpec>,
    /// Strategies for `compare`.
    pub strategies: Vec<Strategy>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            inputs: Inputs::default(),
            hrf: Hrf::Canonical,
            drift_cutoff_hz: Some(DEFAULT_CUTOFF_HZ),
            ar: ArChoice::default(),
            regularization: RegChoice::default(),
            lb: LbConfig::default(),
            correction: Correction::default(),
            whiten: WhitenConfig::default(),
            aci_lags: None,
            output: OutputConfig::default(),
            threads: None,
            seed: 0,
            scenario: None,
            strategies: Vec::new(),
        }
    }
}

fn check_level(what: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must lie in (0, 1), got {x}")))
    }
}

fn check_ar(ar: ArChoice) -> Result<()> {
    match ar {
        ArChoice::Order(p) | ArChoice::Aic(p) if p > AIC_MAX_ORDER => {
            Err(Error::Config(format!("AR order {p} exceeds the maximum {AIC_MAX_ORDER}")))
        }
        _ => Ok(()),
    }
}

fn check_reg(r: RegChoice) -> Result<()> {
    match r {
        RegChoice::Local(f) if !(f > 0.0 && f.is_finite()) => Err(Error::Config(format!("FWHM must be positive, got {f}"))),
        _ => Ok(()),
    }
}

/// SHA-256 of a value's compact JSON.
pub fn hash_json<T: Serialize>(value: &T) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(value).expect("value serializes")))
}

impl PipelineConfig {
    /// Parses a JSON config; unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        check_ar(self.ar)?;
        check_reg(self.regularization)?;
        for s in &self.strategies {
            check_ar(s.ar)?;
            check_reg(s.regularization)?;
        }
        if self.lb.lags == 0 {
            return Err(Error::Config("Ljung-Box needs at least one lag".into()));
        }
        if self.lb.volumes <= self.lb.lags {
            return Err(Error::Config(format!(
                "Ljung-Box volumes ({}) must exceed the lags ({})",
                self.lb.volumes, self.lb.lags
            )));
        }
        check_level("Ljung-Box FDR level", self.lb.q)?;
        check_level("correction level", self.correction.level())?;
        if let Some(c) = self.drift_cutoff_hz {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("drift cutoff must be positive, got {c}")));
            }
        }
        if let Some(tr) = self.inputs.tr {
            if !(tr > 0.0 && tr.is_finite()) {
                return Err(Error::Config(format!("tr must be positive, got {tr}")));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if self.aci_lags == Some(0) {
            return Err(Error::Config("aci_lags must be at least 1".into()));
        }
        if self.inputs.bold.is_none() && self.scenario.is_none() {
            return Err(Error::Config("no input: give a BOLD file or a scenario".into()));
        }
        if matches!(self.regularization, RegChoice::Local(_)) && self.inputs.mesh.is_none() && self.scenario.is_none() {
            return Err(Error::Config("local regularization needs a mesh".into()));
        }
        Ok(())
    }

    /// The configuration as recorded in manifests: execution-only settings
    /// (thread count, output directory) are dropped.
    pub fn canonical(&self) -> PipelineConfig {
        let mut c = self.clone();
        c.threads = None;
        c.output.dir = None;
        c
    }

    /// SHA-256 of the canonical configuration's JSON.
    pub fn hash(&self) -> String {
        hash_json(&self.canonical())
    }
}

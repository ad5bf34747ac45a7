use alloc::string::String;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LinalgError {
    #[error("matrix is singular")]
    Singular,
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
}

/// Validation failures for the core containers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("need at least 2 time points, got {0}")]
    TooFewSamples(usize),
    #[error("need at least 1 vertex")]
    NoVertices,
    #[error("sampling interval must be positive and finite, got {0}")]
    InvalidTr(f64),
    #[error("expected {expected} vertex ids, got {got}")]
    IdCountMismatch { expected: usize, got: usize },
    #[error("face {face} references vertex {index} but the mesh has {vertices} vertices")]
    FaceIndexOutOfRange { face: usize, index: usize, vertices: usize },
    #[error("face {face} repeats vertex {index}")]
    DegenerateFace { face: usize, index: usize },
    #[error("edge {edge} is invalid: ({a}, {b}) with {vertices} vertices")]
    InvalidEdge { edge: usize, a: usize, b: usize, vertices: usize },
    #[error("non-finite coordinate for vertex {0}")]
    NonFiniteCoordinate(usize),
    #[error("mask has {got} entries, mesh has {expected} vertices")]
    MaskLength { expected: usize, got: usize },
    #[error("no conditions")]
    NoConditions,
    #[error("condition {condition:?}: negative onset {onset}")]
    NegativeOnset { condition: String, onset: f64 },
    #[error("condition {condition:?}: nonpositive duration {duration} at onset {onset}")]
    NonPositiveDuration { condition: String, onset: f64, duration: f64 },
    #[error("condition {condition:?}: repeated onset {onset}")]
    RepeatedOnset { condition: String, onset: f64 },
    #[error("condition {condition:?}: non-finite value")]
    NonFiniteEvent { condition: String },
    #[error("condition {0:?} has no events")]
    EmptyCondition(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DesignError {
    #[error("sampling step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("duration must be positive, got {0}")]
    InvalidDuration(f64),
    #[error("dispersion perturbation must be nonzero")]
    ZeroDispersionDelta,
    #[error("derivatives need a canonical HRF")]
    NotCanonical,
    #[error("cutoff frequency must be positive, got {0}")]
    InvalidCutoff(f64),
    #[error("column {index} ({name}) has length {got}, expected {expected}")]
    LengthMismatch { index: usize, name: String, expected: usize, got: usize },
    #[error("design is rank deficient: column {index} ({name}) is linearly dependent on earlier columns")]
    RankDeficient { index: usize, name: String },
    #[error("design has {columns} columns but only {rows} rows")]
    TooManyColumns { rows: usize, columns: usize },
    #[error("column {index} ({name}) contains non-finite values")]
    NonFinite { index: usize, name: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GlmError {
    #[error("response has {response} rows but design has {design}")]
    RowMismatch { response: usize, design: usize },
    #[error("degrees of freedom must be at least 1, got {0}")]
    NoDegreesOfFreedom(i64),
    #[error("design matrix is singular")]
    Singular,
    #[error("column {column} out of range for {columns} regressors")]
    ColumnOutOfRange { column: usize, columns: usize },
    #[error("expected {expected} whitening operators, got {got}")]
    WhitenerCount { expected: usize, got: usize },
    #[error("whitening operator has size {got}, expected {expected}")]
    WhitenerSize { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArError {
    #[error("maximum lag {max_lag} must be below the series length {len}")]
    LagTooLarge { max_lag: usize, len: usize },
    #[error("autocorrelation at lag 0 must be positive, got {0}")]
    InvalidLagZero(f64),
    #[error("need {needed} autocorrelation lags, got {got}")]
    TooFewLags { needed: usize, got: usize },
    #[error("order selection needs more than {needed} samples, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("AR polynomial is not stationary")]
    NonStationary,
    #[error("field dimensions do not match: {0}")]
    Shape(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegularizeError {
    #[error("FWHM must be positive, got {0}")]
    InvalidFwhm(f64),
    #[error("field has {got} columns but the operator covers {expected} vertices")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("every vertex is masked")]
    EmptyMask,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("chi-square statistic must be nonnegative, got {0}")]
    NegativeStatistic(f64),
    #[error("degrees of freedom must be at least 1")]
    InvalidDof,
    #[error("series length {n} must exceed the number of lags {h}")]
    TooFewSamples { n: usize, h: usize },
    #[error("level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("no p-values supplied")]
    Empty,
    #[error("need at least one trial")]
    NoTrials,
    #[error("successes {successes} exceed trials {trials}")]
    TooManySuccesses { successes: u64, trials: u64 },
    #[error("need at least one scan")]
    NoScans,
    #[error("scan masks have inconsistent lengths")]
    RaggedMasks,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("AR coefficients are not stationary")]
    NonStationary,
    #[error("noise variance must be positive, got {0}")]
    InvalidVariance(f64),
    #[error("regions do not partition the unmasked vertices: {0}")]
    BadPartition(String),
    #[error("series length {0} is too short")]
    TooShort(usize),
}

/// Any failure raised by the core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Ar(#[from] ArError),
    #[error(transparent)]
    Regularize(#[from] RegularizeError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

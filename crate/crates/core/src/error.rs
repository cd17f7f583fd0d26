use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("truncation at t = {min_ttf} keeps only {kept} grid points (need at least 3)")]
    TruncationTooShort { min_ttf: f64, kept: usize },
    #[error("system {0} has no time-to-failure")]
    MissingTtf(String),
    #[error("system {id} has non-positive time-to-failure {value}")]
    NonPositiveTtf { id: String, value: f64 },
    #[error("log time-to-failure has zero variance")]
    ZeroVariance,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("all eigenvalues are zero")]
    NoVariance,
    #[error("curve has {got} points but the basis needs {need}")]
    CurveTooShort { got: usize, need: usize },
    #[error("weighted response energy is zero for mode {0}")]
    DegenerateResponse(usize),
    #[error("no training unit survives past t* = {0}")]
    NoSurvivors(f64),
    #[error("no sensor is selected for any failure mode")]
    EmptySelection,
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Non-fatal conditions reported alongside a result.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// A (sensor, cluster) cell had fewer than two members and was merged.
    MergedCluster { sensor: usize, from: usize, into: usize },
    /// The retained component count for a sensor was capped by a small cell.
    CappedComponents { sensor: usize, wanted: usize, kept: usize },
    /// A feature column had zero spread and was left centered but unscaled.
    ConstantFeature { column: usize },
    /// EM hit its iteration cap before the tolerance was met.
    EmNotConverged { iterations: usize },
    /// A mode carried almost no responsibility and kept its previous parameters.
    EmptyMode { mode: usize },
    /// No sensor ended up selected for any mode.
    DegenerateSelection,
    /// A cross-validation fold could not be fitted.
    FoldSkipped { fold: usize, reason: String },
    /// The RUL formula returned a negative value that was clamped to zero.
    NegativeRul,
    /// Too few units for the mode-specific regression; a fallback was used.
    RegressionFallback { mode: usize, reason: String },
}

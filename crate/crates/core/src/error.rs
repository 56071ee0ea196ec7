use thiserror::Error;

/// Errors raised by the bounding pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate basis: signal {index} is linearly dependent on the previous ones")]
    DegenerateBasis { index: usize },

    #[error("invalid input set: {0}")]
    InvalidInputSet(String),

    #[error("amplitude {amp:?} lies outside the input box")]
    OutsideBox { amp: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cell below resolution: largest edge has length {edge}")]
    CellBelowResolution { edge: f64 },

    #[error("insufficient data: need at least {needed} samples, have {have}")]
    InsufficientData { needed: usize, have: usize },

    #[error("inconsistent data: duplicate amplitude at sample {index} with conflicting output (deviation {deviation})")]
    InconsistentData { index: usize, deviation: f64 },

    #[error("empty output set: r1 + r2 = {radii_sum} < r = {r}; data inconsistent with the Lipschitz constant")]
    EmptyOutputSet { radii_sum: f64, r: f64 },

    #[error("input norm {norm} below epsilon {epsilon}")]
    BelowEpsilon { norm: f64, epsilon: f64 },

    #[error("all sample amplitudes coincide; cannot estimate a Lipschitz constant")]
    IdenticalAmplitudes,

    #[error("trajectory diverged at step {step}")]
    TrajectoryDiverged { step: usize },

    #[error("plant query failed: {0}")]
    Plant(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

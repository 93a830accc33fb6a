use thiserror::Error;

/// Errors raised by the simulator and its verification routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite or out-of-domain value: {0}")]
    NonFiniteValue(String),

    #[error("invalid density bounds: need 0 < r < 1 < R < inf, got r={r}, R={upper}")]
    InvalidBounds { r: f64, upper: f64 },

    #[error("no feasible box bounds within the dyadic search range: {0}")]
    NoFeasibleBounds(String),

    #[error("mass correction {magnitude:e} exceeds the allowed {limit:e}")]
    CorrectionTooLarge { magnitude: f64, limit: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("negative transition rate {rate} from label {from} to label {to}")]
    NegativeRate { from: usize, to: usize, rate: f64 },

    #[error("invalid strategy space: {0}")]
    InvalidSpace(String),

    #[error("invalid label density: {0}")]
    InvalidDensity(String),

    #[error("step {dt:e} exceeds the invariant-preserving bound {bound:e}")]
    StepTooLarge { dt: f64, bound: f64 },

    #[error("intermediate stage left the box by {violation:e}")]
    StageLeftBox { violation: f64 },

    #[error("a-priori bound violated: state norm {norm} > bound {bound}")]
    BoundViolated { norm: f64, bound: f64 },

    #[error("empty measure")]
    EmptyMeasure,

    #[error("atom-splitting would need {size} atoms, above the limit {limit}")]
    MeasureTooLarge { size: usize, limit: usize },

    #[error("witness {index} is not 1-Lipschitz (ratio {ratio})")]
    WitnessNotLipschitz { index: usize, ratio: f64 },

    #[error("solver stopped after {iterations} iterations with residual {residual:e}")]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("unsupported kernel for this operation: {0}")]
    UnsupportedKernel(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Config(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

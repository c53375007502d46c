use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("invalid band: center {center} Hz, span {span} Hz")]
    InvalidBand { center: f64, span: f64 },

    #[error("no samples inside band [{lo} Hz, {hi} Hz]")]
    EmptyWindow { lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient samples: need {needed}, have {available}")]
    InsufficientSamples { needed: usize, available: usize },

    #[error("phase step of {step:.3} rad at {freq} Hz exceeds pi/2 after unwrapping")]
    PathologicalUnwrap { freq: f64, step: f64 },

    #[error("no resonance dip found: {0}")]
    NoDip(String),

    #[error("normal matrix is singular at the solution")]
    SingularMatrix,

    #[error("did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("non-physical quantity: {0}")]
    NonPhysical(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("fits mix resonators: {0}")]
    MixedResonator(String),

    #[error("duplicate grid cell at T = {temperature_mk} mK, P = {power_dbm} dBm")]
    DuplicateCell { temperature_mk: f64, power_dbm: f64 },

    #[error("grid too small: need at least {min_temperatures} temperatures and {min_powers} powers")]
    InsufficientGrid {
        min_temperatures: usize,
        min_powers: usize,
    },

    #[error("schema error at line {line}, column {column}: {message}")]
    Schema {
        line: u64,
        column: usize,
        message: String,
    },

    #[error("frequency not strictly increasing at line {line}")]
    NonMonotone { line: u64 },

    #[error("non-finite value at line {line}, column {column}")]
    NonFinite { line: u64, column: usize },

    #[error("result file: {0}")]
    ResultSchema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse error class used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::SingularMatrix
            | Error::NonConvergence { .. }
            | Error::PathologicalUnwrap { .. }
            | Error::Domain(_) => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidTrace(_) => "invalid_trace",
            Error::InvalidBand { .. } => "invalid_band",
            Error::EmptyWindow { .. } => "empty_window",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Domain(_) => "domain",
            Error::InsufficientSamples { .. } => "insufficient_samples",
            Error::PathologicalUnwrap { .. } => "pathological_unwrap",
            Error::NoDip(_) => "no_dip",
            Error::SingularMatrix => "singular_matrix",
            Error::NonConvergence { .. } => "non_convergence",
            Error::NonPhysical(_) => "non_physical",
            Error::Precondition(_) => "precondition",
            Error::MixedResonator(_) => "mixed_resonator",
            Error::DuplicateCell { .. } => "duplicate_cell",
            Error::InsufficientGrid { .. } => "insufficient_grid",
            Error::Schema { .. } => "schema",
            Error::NonMonotone { .. } => "non_monotone",
            Error::NonFinite { .. } => "non_finite",
            Error::ResultSchema(_) => "result_schema",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

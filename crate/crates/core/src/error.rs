use thiserror::Error;

use crate::hilbert::Level;

#[derive(Debug, Error)]
pub enum Error {
    #[error("basis index out of range: |{n_i}, {n_s}, {level:?}> with cutoff {cutoff}")]
    IndexOutOfRange {
        n_i: usize,
        n_s: usize,
        level: Level,
        cutoff: usize,
    },

    #[error("linear index {index} out of range for dimension {dimension}")]
    LinearIndexOutOfRange { index: usize, dimension: usize },

    #[error("basis mismatch: expected cutoff {expected}, found cutoff {found}")]
    BasisMismatch { expected: usize, found: usize },

    #[error("length mismatch: expected {expected} entries, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("phase of |{n},{n},g> relative to |0,0,g> is undefined (amplitude magnitude {magnitude:e})")]
    UndefinedPhase { n: usize, magnitude: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("oracle refuses cutoff {cutoff} (limit {limit})")]
    BasisTooLarge { cutoff: usize, limit: usize },

    #[error("resource limit: {what} requires {required} entries, limit is {limit}")]
    ResourceLimit {
        what: &'static str,
        required: usize,
        limit: usize,
    },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("non-finite amplitudes at t = {t}")]
    NonFinite { t: f64 },

    #[error("trace drifted by {drift:e} at t = {t}")]
    TraceDrift { t: f64, drift: f64 },

    #[error("state is not confined to the pair sector (weight {weight:e} outside)")]
    OutsidePairSector { weight: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Coarse classification used by front-ends for exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::IndexOutOfRange { .. }
            | Error::LinearIndexOutOfRange { .. }
            | Error::BasisMismatch { .. }
            | Error::LengthMismatch { .. }
            | Error::InvalidParameter(_)
            | Error::OutsidePairSector { .. } => ErrorKind::Input,
            Error::UndefinedPhase { .. }
            | Error::StepSizeUnderflow { .. }
            | Error::NonFinite { .. }
            | Error::TraceDrift { .. } => ErrorKind::Numerical,
            Error::BasisTooLarge { .. } | Error::ResourceLimit { .. } => ErrorKind::Resource,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => ErrorKind::Io,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Numerical,
    Resource,
    Io,
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid station {id}: {reason}")]
    InvalidStation { id: String, reason: String },

    #[error("no baseline data for station {0}")]
    NoBaselineData(String),

    #[error("threshold station {threshold} does not match series station {series}")]
    StationMismatch { threshold: String, series: String },

    #[error("invalid distribution parameters: {0}")]
    InvalidParameters(String),

    #[error("probability {0} outside (0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("matrix not positive definite after {attempts} jitter attempts")]
    NotPositiveDefinite { attempts: u32 },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("sampler initialization failed: {0}")]
    Initialization(String),

    #[error("empty chain")]
    EmptyChain,

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

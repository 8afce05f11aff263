use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dataset '{0}' has no observations")]
    EmptyDataset(String),

    #[error("non-finite value at position {index} in dataset '{label}'")]
    NonFiniteValue { label: String, index: usize },

    #[error("duplicate time stamp {time} in dataset '{label}'")]
    DuplicateTime { label: String, time: f64 },

    #[error("times and values differ in length ({times} vs {values})")]
    LengthMismatch { times: usize, values: usize },

    #[error("y-values span a degenerate range")]
    DegenerateRange,

    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid bandwidth: {0}")]
    InvalidBandwidth(String),

    #[error("every bandwidth candidate leaves some point without kernel mass")]
    AllPredictionsUndefined,

    #[error("sample has zero spread; a smoothed density cannot be fitted")]
    DegenerateSample,

    #[error("invalid warp: {0}")]
    InvalidWarp(String),

    #[error("warped second-sample times carry no time-kernel mass")]
    ZeroTimeMass,

    #[error("no admissible candidate for knot {knot}")]
    NoAdmissibleCandidate { knot: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("first dataset is empty")]
    EmptyFirstDataset,

    #[error("no evaluation point has kernel mass above the floor")]
    AllPointsThin,

    #[error("{failed} of {total} replicates failed")]
    ReplicateFailure { failed: usize, total: usize },

    #[error("mixture density vanishes at t = {0}")]
    DensityZero(f64),

    #[error("bias-ratio denominator vanishes at t = {0}")]
    DivisionByZero(f64),

    #[error("invalid sawtooth warp: {0}")]
    InvalidSawtooth(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),
}

impl Error {
    /// Short machine-readable name, used in structured CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "Io",
            Error::Parse { .. } => "ParseError",
            Error::EmptyDataset(_) => "EmptyDataset",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::DuplicateTime { .. } => "DuplicateTime",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::DegenerateRange => "DegenerateRange",
            Error::InsufficientPoints { .. } => "InsufficientPoints",
            Error::InvalidKernel(_) => "InvalidKernel",
            Error::InvalidBandwidth(_) => "InvalidBandwidth",
            Error::AllPredictionsUndefined => "AllPredictionsUndefined",
            Error::DegenerateSample => "DegenerateSample",
            Error::InvalidWarp(_) => "InvalidWarp",
            Error::ZeroTimeMass => "ZeroTimeMass",
            Error::NoAdmissibleCandidate { .. } => "NoAdmissibleCandidate",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::EmptyFirstDataset => "EmptyFirstDataset",
            Error::AllPointsThin => "AllPointsThin",
            Error::ReplicateFailure { .. } => "ReplicateFailure",
            Error::DensityZero(_) => "DensityZero",
            Error::DivisionByZero(_) => "DivisionByZero",
            Error::InvalidSawtooth(_) => "InvalidSawtooth",
            Error::InvalidModel(_) => "InvalidModel",
        }
    }
}

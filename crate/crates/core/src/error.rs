use thiserror::Error;

/// Errors produced anywhere in the simulation, scoring and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty volume")]
    EmptyVolume,
    #[error("degenerate box: {0}")]
    DegenerateBox(String),
    #[error("invalid grid dimensions {0:?}: every axis needs at least 2 cells")]
    InvalidDims([usize; 3]),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("material creation: {0} voxel(s) occupied outside the pristine tooth")]
    MaterialCreation(usize),
    #[error("degenerate counts: {0}")]
    DegenerateCounts(&'static str),
    #[error("zero variance")]
    ZeroVariance,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("undefined expected agreement")]
    UndefinedExpectedAgreement,
    #[error("no fixation: trial has no gaze hits")]
    NoFixation,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}

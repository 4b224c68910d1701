use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid excursion: {0}")]
    InvalidExcursion(String),
    #[error("time {0} lies outside [0, {1}]")]
    OutOfRange(f64, f64),
    #[error("invalid offspring distribution: {0}")]
    InvalidOffspring(String),
    #[error("invalid step distribution: {0}")]
    InvalidStep(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate reduced tree: {0}")]
    Degenerate(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("insufficient resolution: {0}")]
    Resolution(String),
    #[error("gauge was calibrated at delta = {calibrated}, not {requested}")]
    GaugeMismatch { calibrated: f64, requested: f64 },
    #[error("conditioning failed: {0}")]
    Conditioning(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

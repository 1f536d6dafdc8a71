use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spin quantum number j = {0} (must be a positive half-integer)")]
    InvalidSpin(f64),
    #[error("invalid coherent-state angles theta = {theta}, phi = {phi}")]
    InvalidAngles { theta: f64, phi: f64 },
    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("propagation failed: {0}")]
    Propagation(String),
    #[error("episode is already finished")]
    EpisodeDone,
    #[error("kick action is masked (budget or per-slot limit reached)")]
    KickMasked,
    #[error("kick time {0} is not on the time grid")]
    OffGrid(f64),
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty curve")]
    EmptyCurve,
    #[error("degenerate reference value {0:e}")]
    DegenerateReference(f64),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

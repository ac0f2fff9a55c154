use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("wavefunction magnitude underflow (log|psi| = {log_abs}) at a near-node configuration")]
    NodeProximity { log_abs: f64 },
    #[error("non-finite partial derivative for parameter index {index}")]
    NonFiniteGradient { index: usize },
    #[error("sampler stalled: acceptance was zero over a full window of {window} steps")]
    SamplerStalled { window: usize },
    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

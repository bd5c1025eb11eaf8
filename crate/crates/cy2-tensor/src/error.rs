use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("split_channels requires an even trailing dimension, got {0}")]
    OddChannels(usize),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("tape already consumed by a previous backward call")]
    TapeConsumed,
    #[error("variables belong to different tapes")]
    MixedTapes,
    #[error("tensor i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("tensor format: {0}")]
    Format(String),
}

impl TensorError {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }
}

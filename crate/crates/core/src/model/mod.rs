//! Desk-scale tagger, loss, learning-rate schedule, training loop and
//! checkpoints.

mod init;
mod net;
mod params;
mod schedule;
mod train;

pub use init::{load_external_init, InitReport};
pub use net::{
    grad_check, loss, loss_grad_logits, sigmoid_probs, Architecture, ForwardPass, Model, ModelConfig,
    LOSS_EPS,
};
pub use params::{ParameterVector, TensorSpec};
pub use schedule::LRSchedule;
pub use train::{predict, predict_logits, train, AdamConfig, Checkpoint, TrainConfig, TrainLogRow, TrainOutcome};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("manifest mismatch: {0}")]
    Manifest(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}, iteration {iteration}: loss {loss}")]
    Divergence { epoch: usize, iteration: u64, loss: f64 },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("no tensor in {path} matches the model")]
    Incompatible { path: String },
    #[error("training data: {0}")]
    Data(String),
}

#[cfg(test)]
mod tests;

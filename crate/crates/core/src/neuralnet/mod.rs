//! Minimal CNN-LSTM engine with exact reverse-mode gradients.

mod forecast;
mod layers;
mod lstm;
mod network;
mod tensor;
mod train;

use thiserror::Error;

pub use forecast::{iterative_forecast, iterative_forecast_scaled};
pub use layers::{conv1d_forward, conv_output_size, maxpool1d_forward, sigmoid, Activation};
pub use lstm::{lstm_cell_forward, LstmState, LstmWeights};
pub use network::{
    compute_gradients, network_forward, Network, NetworkConfig, TrainedNetwork, Weights, BLOCK_NAMES,
    MODEL_FORMAT,
};
pub use tensor::Tensor;
pub use train::{evaluate_loss, train, LossKind, OptimizerKind, TrainingConfig};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("model file: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, NetError>;

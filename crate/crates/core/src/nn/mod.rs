//! Networks, gradients, losses, SGD training and checkpoints.

pub mod checkpoint;
pub mod loss;
pub mod network;
pub mod optim;
pub mod train;

use thiserror::Error;

use crate::tensor::TensorError;

pub use loss::{additive_l2_loss, cross_entropy_loss};
pub use network::{ForwardCache, Gradients, Inference, LayerSpec, Network, NetworkSpec, OutputGrad, OutputHead};
pub use optim::sgd_step;
pub use train::{train, train_with, Dataset, LossKind, Sample, Target, TrainConfig};

#[derive(Debug, Error)]
pub enum NnError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("forward cache is stale: parameters changed or it belongs to another network")]
    StaleCache,
    #[error("forward cache lacks the activations needed for backward")]
    MissingCache,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("non-finite loss {value} at epoch {epoch}, sample {sample}")]
    NonFinite { epoch: usize, sample: usize, value: f64 },
    #[error("checkpoint error at byte {offset}: {detail}")]
    Checkpoint { offset: u64, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl NnError {
    pub(crate) fn at(self, context: String) -> Self {
        match self {
            NnError::Config(m) => NnError::Config(format!("{context}: {m}")),
            NnError::Tensor(e) => NnError::Config(format!("{context}: {e}")),
            other => other,
        }
    }
}

//! A small residual CNN over DCT cubes with a GeM-pooled global head and a
//! softplus attention local head, plus its autograd, training loop and model
//! file.

pub mod checkpoint;
pub mod graph;
pub mod model;
pub mod tensor;
pub mod train;

pub use checkpoint::Checkpoint;
pub use graph::{Graph, Var};
pub use model::{forward, ForwardOutput, InputKind, ModelConfig, ModelParams, StageConfig};
pub use tensor::Tensor;
pub use train::{train, LabeledImage, TrainConfig, TrainLog};

use crate::pipeline::PipelineError;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("backward called before a graph was built")]
    GraphNotBuilt,
    #[error("training set is empty")]
    EmptyDataset,
    #[error("training set has a single class")]
    SingleClassDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint version {found}, expected {expected}")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("training loss became non-finite in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests;

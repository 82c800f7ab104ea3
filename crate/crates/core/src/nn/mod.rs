//! A small neural-network engine: H×W×C tensors, im2col convolution,
//! pooling, inception blocks, dense layers, L2 normalization, softmax
//! cross-entropy, reverse-mode gradients and ADAM.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod network;
pub mod ops;
pub mod optim;
pub mod tensor;
pub mod train;


use thiserror::Error;

pub use layers::{InceptionSpec, Layer, LayerSpec};
pub use network::{Architecture, Gradients, LayerParams, Network};
pub use ops::Padding;
pub use optim::{adam_step, OptimizerState, TrainConfig};
pub use tensor::Tensor;
pub use train::{train, EpochMetrics, SampleSource, TrainReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid layer spec: {0}")]
    Spec(String),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}, sample {sample}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        sample: usize,
        loss: f64,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

//! Reverse-mode automatic differentiation over dense `f64` tensors, plus the
//! layer primitives and the Adam optimizer the network is built from.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod graph;
mod layers;
mod tensor;

pub use adam::{AdamConfig, AdamState, DecayMode};
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointData, ParamRecord};
pub use graph::{Gradients, Graph, Var};
pub use layers::{dropout, dropout_mask, linear, mix_seed};
pub use tensor::{ParamId, ParamStore, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum AutodiffError {
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod ops_tests;

//! Dense reverse-mode automatic differentiation in 64-bit floats.
//!
//! A [`Graph`] records operations over constants and the parameters of a
//! [`ParamStore`]; [`Graph::backward`] returns [`Gradients`] aligned with the
//! store. Graphs are single-threaded; stores can be shared read-only.

mod checkpoint;
mod gradcheck;
mod graph;
mod optim;
mod params;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Axis, Graph, Var};
pub use optim::{Adam, AdamConfig};
pub use params::{Gradients, ParamId, ParamStore};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    Shape { op: &'static str, left: [usize; 2], right: [usize; 2] },
    #[error("{op}: index {index} out of range for length {len}")]
    Index { op: &'static str, index: usize, len: usize },
    #[error("expected a 1x1 node, got {0:?}")]
    NotScalar([usize; 2]),
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("parameter `{0}` is missing")]
    MissingParam(String),
}

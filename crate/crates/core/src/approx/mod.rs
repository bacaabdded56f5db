//! Numeric substrate: a small dense network with hand-written
//! backpropagation, the Adam optimizer, and replay buffers.

mod adam;
mod gradcheck;
mod mlp;
mod replay;

use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::max_gradient_error;
pub use mlp::{Gradients, Layer, Mlp, Sample, Supervision};
pub use replay::{PrioritizedBuffer, PrioritizedSample, Transition, UniformBuffer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApproxError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite gradient")]
    NonFinite,
    #[error("buffer holds {len} transitions, minibatch needs {batch}")]
    Undersized { len: usize, batch: usize },
    #[error("snapshot: {0}")]
    Parse(String),
}

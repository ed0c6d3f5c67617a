//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! A [`Graph`] is an append-only tape: every operation records a node whose
//! parents have smaller ids, so reverse id order is a valid topological
//! order for the backward sweep. All math is f64; there is no broadcasting
//! beyond the few documented cases, no views, and no higher-order
//! gradients. A graph can be differentiated once; a second call to
//! [`Graph::backward`] is an error.
//!
//! Leaf data may be mutated afterwards with [`Graph::set_leaf_data`] and the
//! whole tape re-evaluated with [`Graph::recompute`], which is how the
//! finite-difference checker in [`gradcheck`] probes gradients without
//! rebuilding graphs.

mod graph;
mod ops;
#[cfg(test)]
mod tests;

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;

pub use adam::{Adam, Parameter};
pub use graph::{Graph, Tensor, TensorId};

/// Errors produced by graph construction, backward passes, the optimizer,
/// and checkpoint I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected {expected} values, got {actual}")]
    LengthMismatch {
        op: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{op}: index {index} out of range for dimension of size {size}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        size: usize,
    },
    #[error("backward requires a scalar root, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
    #[error("graph already differentiated; build a fresh graph for another backward pass")]
    GraphConsumed,
    #[error("{op}: only leaf nodes can be mutated")]
    NotALeaf { op: &'static str },
    #[error("temperature must be positive, got {value}")]
    NonPositiveTemperature { value: f64 },
    #[error("optimizer: parameter {name:?} has no gradient")]
    MissingGradient { name: String },
    #[error("optimizer: got {grads} gradients for {params} parameters")]
    GradientCount { params: usize, grads: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

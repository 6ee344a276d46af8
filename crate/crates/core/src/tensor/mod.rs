//! Reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! The engine records computations as immutable [`Graph`]s of primitive
//! operations (affine maps, ReLU, elementwise arithmetic, reductions,
//! soft/hard minima). Gradients are obtained by *extending* a graph with
//! nodes that compute the adjoints symbolically, so the gradient of a
//! gradient (needed for gradient-norm penalties) is just one more
//! extension of the same graph.
//!
//! Everything is `f64`. Non-finite intermediates are a contract violation
//! and surface as [`TensorError::NonFinite`].

mod array;
mod eval;
mod grad;
mod graph;

pub use array::Array;
pub use eval::Bindings;
pub use grad::{
    central_difference, eval_and_grad, finite_diff_check, grad_of_gradnorm,
    gradnorm_penalty_graph, GradProgram, GradientMap,
};
pub use graph::{Graph, LeafKind, NodeId};

use thiserror::Error;

/// Errors raised while building or evaluating computation graphs.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("non-finite value produced by node {node} ({op})")]
    NonFinite { node: usize, op: String },

    #[error("leaf `{0}` was not bound to a value")]
    UnboundLeaf(String),

    #[error("no leaf named `{0}` in this graph")]
    UnknownLeaf(String),

    #[error("bound value for leaf `{name}` has shape {got:?}, leaf expects {expected:?}")]
    LeafShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("node {0} is not a scalar; gradients are defined for scalar outputs only")]
    NotScalar(usize),

    #[error("gradient norm is zero at the evaluation point; the penalty is not differentiable there")]
    ZeroGradientNorm,

    #[error("array data length {len} does not match shape {shape:?}")]
    BadArrayShape { shape: Vec<usize>, len: usize },

    #[error("array contains a non-finite entry")]
    NonFiniteArray,

    #[error("empty reduction: node {0} reduces over zero elements")]
    EmptyReduction(usize),

    #[error("finite-difference step must be positive, got {0}")]
    BadStep(f64),
}

pub type Result<T> = std::result::Result<T, TensorError>;

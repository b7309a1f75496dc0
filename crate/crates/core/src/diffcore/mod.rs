//! Dense tensors, a dynamic reverse-mode tape, Adam, and dense layers.
//!
//! Everything here is generic over [`Scalar`] (`f32` or `f64`); the rest of
//! the crate uses the `f64` aliases exported at the crate root.

mod adam;
pub mod gradcheck;
pub mod nn;
mod params;
mod scalar;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use params::{Bound, ParamId, ParamSet};
pub use scalar::{log_sigmoid, sigmoid, sigmoid_bce, softplus, Scalar};
pub use tape::{BinaryOp, ReduceOp, Tape, UnaryOp, Var, LOGIT_CLAMP};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiffError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("non-finite gradient for parameter `{param}`")]
    Optimizer { param: String },
}

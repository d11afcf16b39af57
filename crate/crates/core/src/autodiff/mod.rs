//! Reverse-mode automatic differentiation over dense `f64` tensors.

mod adamw;
mod gradcheck;
mod graph;
pub mod kernels;
mod tensor;

pub use adamw::{AdamW, AdamWConfig};
pub use gradcheck::{gradcheck, GradcheckConfig, GradcheckReport};
pub use graph::{smooth_l1_value, Graph, Var};
pub use tensor::Tensor;

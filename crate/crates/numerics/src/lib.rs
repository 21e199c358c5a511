//! Minimal dense-tensor and reverse-mode autodiff core.
//!
//! Values are `f64` throughout. A [`Graph`] records primitives as they are
//! applied; [`Graph::backward`] replays the record in reverse to produce
//! gradients for every leaf.

mod blas;
mod error;
mod gradcheck;
mod graph;
mod ops;
mod serial;
mod tensor;

pub use error::{NumericsError, Result};
pub use gradcheck::{grad_check, grad_check_seeded};
pub use graph::{Gradients, Graph, Var};
pub use ops::{conv_output_len, log_sum_exp, sigmoid, Padding, LAYER_NORM_EPS};
pub use serial::{encoded_len, read_tensor, write_tensor, MAGIC};
pub use tensor::Tensor;

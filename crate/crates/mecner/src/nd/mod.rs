//! Minimal dense-tensor core with reverse-mode automatic
//! differentiation, an Adam optimizer, and a finite-difference
//! gradient checker.
//!
//! The op set is exactly what the model needs: no broadcasting beyond
//! row-wise bias addition, no tensors past rank 3, f64 throughout.

mod adam;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error, CoordSampling, GradCheckReport, SamplingPolicy};
pub use graph::{Graph, Mode, NodeId};
pub use tensor::{ParamId, ParamStore, Tensor};

pub(crate) use graph::log_sum_exp_kernel;

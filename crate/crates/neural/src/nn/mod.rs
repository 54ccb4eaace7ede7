//! Minimal reverse-mode autodiff over 2-D f32 tensors.

mod graph;
mod params;
mod tensor;

pub use graph::{Graph, NodeId};
pub(crate) use graph::softmax_row;
pub use params::{fan_in_uniform, normal_tensor, Adam, AdamConfig, GradStore, NamedTensor, ParamId, ParamStore};
pub use tensor::{matmul, Tensor};

#[cfg(test)]
mod gradcheck;

//! Dense tensors and the layer kernels behind inference and Grad-CAM.
//!
//! All arithmetic is `f64`. Weights stored as `f32` on disk are widened on
//! load so gradients can be checked tightly against finite differences.

pub mod kernels;
pub mod network;
mod tensor;

pub use kernels::{
    conv2d_backward_input, conv2d_forward, dense_backward_input, dense_forward, maxpool_backward,
    maxpool_forward, relu_backward, relu_forward, softmax,
};
pub use network::{
    backward_from, backward_to_layer, forward_layer, forward_logits, forward_trace, Conv2d, Dense,
    Layer, LayerCache,
};
pub use tensor::Tensor;

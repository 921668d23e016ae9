//! Dense numerical core: kernels, GRU layers, optimizer, quantization and
//! the parameter container format.

pub mod adam;
pub mod container;
pub mod gradcheck;
pub mod gru;
mod params;
pub mod quant;
mod real;

pub use params::{clip_grad_norm, l2_norm, ParamLayout, ParamSpec, Tensor};
pub use real::{
    axpy, cross_entropy, dot, log_add, log_softmax, log_softmax2, mat_vec_t_acc, matmul, outer_acc, sigmoid,
    softmax, vec_mat_acc, DType, Real,
};

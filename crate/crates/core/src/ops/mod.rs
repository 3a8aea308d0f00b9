//! Numerical kernels for the MobileNetV2 operator set, forward and backward.

mod activation;
mod backward;
mod conv;
mod dense;
pub mod gemm;
mod im2col;
mod norm;

pub use activation::{dropout, relu6, relu6_backward};
pub(crate) use activation::relu6_in_place;
pub use backward::{op_backward, OpGrads, SavedContext};
pub use conv::{
    conv2d, conv2d_backward, depthwise_conv2d, depthwise_conv2d_backward, output_extent, ConvGrads, ConvParams,
    ConvPath,
};
pub use dense::{
    global_avg_pool, global_avg_pool_backward, linear, linear_backward, softmax, softmax_backward,
    softmax_cross_entropy_backward, LinearGrads, LinearParams,
};
pub use norm::{
    batchnorm, batchnorm_backward, batchnorm_forward, update_running_stats, BatchNormContext, BatchNormGrads,
    BatchNormParams,
};

/// Whether batch norm and dropout behave as during training or inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

//! Uniform entry point for the analytic backward pass of every op.
//!
//! The model calls the per-op backward functions directly; this module exists
//! for callers (and gradient checks) that handle ops generically.

use crate::error::{Error, Result};
use crate::ops::{
    batchnorm_backward, conv2d_backward, depthwise_conv2d_backward, global_avg_pool_backward,
    linear_backward, relu6_backward, softmax_backward, softmax_cross_entropy_backward,
    BatchNormContext, ConvParams, LinearParams,
};
use crate::tensor::{Scalar, Tensor};

/// Forward-pass values an op needs to compute its gradients.
#[derive(Clone, Debug)]
pub enum SavedContext<T = f32> {
    Conv2d { input: Tensor<T>, params: ConvParams<T> },
    DepthwiseConv2d { input: Tensor<T>, params: ConvParams<T> },
    Relu6 { input: Tensor<T> },
    BatchNorm { ctx: BatchNormContext<T>, gamma: Vec<T> },
    GlobalAvgPool { input_shape: [usize; 4] },
    Linear { input: Tensor<T>, params: LinearParams<T> },
    Softmax { output: Tensor<T> },
    /// Softmax followed by mean cross-entropy; grad_output is the scalar loss gradient.
    SoftmaxCrossEntropy { probs: Tensor<T>, labels: Vec<usize> },
}

/// Gradient for the op's input plus one vector per parameter, in the order
/// weight, bias (when present) for conv/linear and gamma, beta for batch norm.
#[derive(Clone, Debug)]
pub struct OpGrads<T = f32> {
    pub input: Tensor<T>,
    pub params: Vec<Vec<T>>,
}

pub fn op_backward<T: Scalar>(ctx: Option<&SavedContext<T>>, grad_out: &Tensor<T>) -> Result<OpGrads<T>> {
    let ctx = ctx.ok_or(Error::MissingContext)?;
    Ok(match ctx {
        SavedContext::Conv2d { input, params } => {
            let g = conv2d_backward(input, params, grad_out, true)?;
            conv_grads(g)
        }
        SavedContext::DepthwiseConv2d { input, params } => {
            let g = depthwise_conv2d_backward(input, params, grad_out)?;
            conv_grads(g)
        }
        SavedContext::Relu6 { input } => OpGrads {
            input: relu6_backward(input, grad_out)?,
            params: vec![],
        },
        SavedContext::BatchNorm { ctx, gamma } => {
            let g = batchnorm_backward(ctx, gamma, grad_out)?;
            OpGrads {
                input: g.input,
                params: vec![g.gamma, g.beta],
            }
        }
        SavedContext::GlobalAvgPool { input_shape } => OpGrads {
            input: global_avg_pool_backward(*input_shape, grad_out)?,
            params: vec![],
        },
        SavedContext::Linear { input, params } => {
            let g = linear_backward(input, params, grad_out)?;
            OpGrads {
                input: g.input,
                params: vec![g.weight, g.bias],
            }
        }
        SavedContext::Softmax { output } => OpGrads {
            input: softmax_backward(output, grad_out)?,
            params: vec![],
        },
        SavedContext::SoftmaxCrossEntropy { probs, labels } => {
            if grad_out.len() != 1 {
                return Err(Error::shape(
                    "cross_entropy",
                    format!("grad_output {:?} must be a scalar", grad_out.shape()),
                ));
            }
            OpGrads {
                input: softmax_cross_entropy_backward(probs, labels, grad_out.data()[0])?,
                params: vec![],
            }
        }
    })
}

fn conv_grads<T: Scalar>(g: crate::ops::ConvGrads<T>) -> OpGrads<T> {
    let mut params = vec![g.weight.into_data()];
    if let Some(b) = g.bias {
        params.push(b);
    }
    OpGrads { input: g.input, params }
}

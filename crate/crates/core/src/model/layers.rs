//! Layer types of the network and their forward/backward passes.
//!
//! Backpropagation is layer-sequential: each layer saves what it needs in a
//! [`LayerCache`] during a recorded forward pass and consumes it on the way back.

use crate::data::Rng;
use crate::error::{Error, Result};
use crate::model::BottleneckSpec;
use crate::ops::{
    self, batchnorm_backward, batchnorm_forward, conv2d, conv2d_backward, depthwise_conv2d,
    depthwise_conv2d_backward, global_avg_pool, global_avg_pool_backward, linear, linear_backward,
    update_running_stats, BatchNormContext, BatchNormParams, ConvParams, ConvPath, LinearParams, Mode,
};
use crate::tensor::{Shape, Tensor};

/// Convolution (full or depthwise) followed by batch norm and optionally ReLU6.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvBn {
    pub conv: ConvParams<f32>,
    pub depthwise: bool,
    pub bn: BatchNormParams<f32>,
    pub relu6: bool,
}

#[derive(Debug)]
pub struct ConvBnCache {
    input: Tensor<f32>,
    bn: BatchNormContext<f32>,
    /// Post-activation output; the ReLU6 mask is `0 < y < 6`.
    output: Option<Tensor<f32>>,
}

impl ConvBn {
    pub fn out_channels(&self) -> usize {
        self.conv.out_channels()
    }

    fn conv(&self, x: &Tensor<f32>, path: ConvPath) -> Result<Tensor<f32>> {
        if self.depthwise {
            depthwise_conv2d(x, &self.conv, path)
        } else {
            conv2d(x, &self.conv, path)
        }
    }

    pub fn forward_infer(&self, x: &Tensor<f32>, path: ConvPath) -> Result<Tensor<f32>> {
        let z = self.conv(x, path)?;
        let (mut y, _) = batchnorm_forward(&z, &self.bn, Mode::Infer)?;
        if self.relu6 {
            ops::relu6_in_place(&mut y);
        }
        Ok(y)
    }

    /// Recorded forward pass; `bn_mode` Train also updates running statistics.
    pub fn forward_record(&mut self, x: &Tensor<f32>, bn_mode: Mode, path: ConvPath) -> Result<(Tensor<f32>, ConvBnCache)> {
        let z = self.conv(x, path)?;
        let (mut y, bn) = batchnorm_forward(&z, &self.bn, bn_mode)?;
        update_running_stats(&mut self.bn, &bn);
        let output = if self.relu6 {
            ops::relu6_in_place(&mut y);
            Some(y.clone())
        } else {
            None
        };
        Ok((
            y,
            ConvBnCache {
                input: x.clone(),
                bn,
                output,
            },
        ))
    }

    /// Returns the input gradient (when requested) and [dW, dgamma, dbeta].
    pub fn backward(&self, cache: &ConvBnCache, grad: Tensor<f32>, need_input: bool) -> Result<(Option<Tensor<f32>>, Vec<Vec<f32>>)> {
        let mut grad = grad;
        if let Some(y) = &cache.output {
            for (g, &v) in grad.data_mut().iter_mut().zip(y.data()) {
                if !(v > 0.0 && v < 6.0) {
                    *g = 0.0;
                }
            }
        }
        let bn = batchnorm_backward(&cache.bn, &self.bn.gamma, &grad)?;
        let conv = if self.depthwise {
            depthwise_conv2d_backward(&cache.input, &self.conv, &bn.input)?
        } else {
            conv2d_backward(&cache.input, &self.conv, &bn.input, need_input)?
        };
        let input = need_input.then_some(conv.input);
        Ok((input, vec![conv.weight.into_data(), bn.gamma, bn.beta]))
    }

    fn output_shape(&self, [n, _, h, w]: Shape) -> Result<Shape> {
        let [_, _, kh, kw] = self.conv.weight.shape();
        Ok([
            n,
            self.out_channels(),
            ops::output_extent(h, kh, self.conv.stride, self.conv.padding)?,
            ops::output_extent(w, kw, self.conv.stride, self.conv.padding)?,
        ])
    }

    fn learnable(&self) -> [&[f32]; 3] {
        [self.conv.weight.data(), &self.bn.gamma, &self.bn.beta]
    }

    fn learnable_mut(&mut self) -> [&mut [f32]; 3] {
        [self.conv.weight.data_mut(), &mut self.bn.gamma, &mut self.bn.beta]
    }
}

/// Inverted residual: optional 1×1 expand, 3×3 depthwise, linear 1×1 project.
#[derive(Clone, Debug, PartialEq)]
pub struct Bottleneck {
    pub spec: BottleneckSpec,
    pub stage: usize,
    pub expand: Option<ConvBn>,
    pub depthwise: ConvBn,
    pub project: ConvBn,
}

#[derive(Debug)]
pub struct BottleneckCache {
    expand: Option<ConvBnCache>,
    depthwise: ConvBnCache,
    project: ConvBnCache,
}

impl Bottleneck {
    pub fn forward_infer(&self, x: &Tensor<f32>, path: ConvPath) -> Result<Tensor<f32>> {
        let h = match &self.expand {
            Some(e) => e.forward_infer(x, path)?,
            None => x.clone(),
        };
        let h = self.depthwise.forward_infer(&h, path)?;
        let mut y = self.project.forward_infer(&h, path)?;
        if self.spec.has_residual() {
            add_assign(&mut y, x);
        }
        Ok(y)
    }

    fn forward_record(&mut self, x: &Tensor<f32>, bn_mode: Mode, path: ConvPath) -> Result<(Tensor<f32>, BottleneckCache)> {
        let (h, expand) = match &mut self.expand {
            Some(e) => {
                let (h, c) = e.forward_record(x, bn_mode, path)?;
                (h, Some(c))
            }
            None => (x.clone(), None),
        };
        let (h, depthwise) = self.depthwise.forward_record(&h, bn_mode, path)?;
        let (mut y, project) = self.project.forward_record(&h, bn_mode, path)?;
        if self.spec.has_residual() {
            add_assign(&mut y, x);
        }
        Ok((
            y,
            BottleneckCache {
                expand,
                depthwise,
                project,
            },
        ))
    }

    fn backward(&self, cache: &BottleneckCache, grad: Tensor<f32>, need_input: bool) -> Result<(Option<Tensor<f32>>, Vec<Vec<f32>>)> {
        let skip = self.spec.has_residual().then(|| grad.clone());
        let (g, project) = self.project.backward(&cache.project, grad, true)?;
        let need_dw_input = need_input || self.expand.is_some();
        let (g, depthwise) = self.depthwise.backward(&cache.depthwise, g.expect("requested"), need_dw_input)?;
        let mut grads = Vec::with_capacity(9);
        let g = match (&self.expand, &cache.expand) {
            (Some(e), Some(c)) => {
                let (g, expand) = e.backward(c, g.expect("requested"), need_input)?;
                grads.extend(expand);
                g
            }
            _ => g,
        };
        grads.extend(depthwise);
        grads.extend(project);
        let input = match (g, skip) {
            (Some(mut g), Some(s)) => {
                add_assign(&mut g, &s);
                Some(g)
            }
            (g, _) => g,
        };
        Ok((input.filter(|_| need_input), grads))
    }

    fn units(&self) -> impl Iterator<Item = &ConvBn> {
        self.expand.iter().chain([&self.depthwise, &self.project])
    }

    fn units_mut(&mut self) -> impl Iterator<Item = &mut ConvBn> {
        self.expand.iter_mut().chain([&mut self.depthwise, &mut self.project])
    }
}

fn add_assign(y: &mut Tensor<f32>, x: &Tensor<f32>) {
    for (a, &b) in y.data_mut().iter_mut().zip(x.data()) {
        *a += b;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    ConvBn(ConvBn),
    Bottleneck(Bottleneck),
    GlobalAvgPool,
    Dropout { rate: f32 },
    Linear(LinearParams<f32>),
    Softmax,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub name: String,
    pub trainable: bool,
    pub kind: LayerKind,
}

#[derive(Debug)]
pub enum LayerCache {
    ConvBn(ConvBnCache),
    Bottleneck(BottleneckCache),
    GlobalAvgPool(Shape),
    Dropout(Vec<f32>),
    Linear(Tensor<f32>),
    Softmax,
}

/// Borrowed view of one stored tensor, for serialization and inspection.
pub struct NamedTensor<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f32],
}

pub struct NamedTensorMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f32],
}

impl Layer {
    pub fn forward_infer(&self, x: &Tensor<f32>, path: ConvPath) -> Result<Tensor<f32>> {
        match &self.kind {
            LayerKind::ConvBn(c) => c.forward_infer(x, path),
            LayerKind::Bottleneck(b) => b.forward_infer(x, path),
            LayerKind::GlobalAvgPool => global_avg_pool(x),
            LayerKind::Dropout { .. } => Ok(x.clone()),
            LayerKind::Linear(p) => linear(x, p),
            LayerKind::Softmax => ops::softmax(x),
        }
    }

    /// Forward pass in train mode with saved context. Batch norm uses batch
    /// statistics only when the layer is trainable.
    pub fn forward_record(&mut self, x: &Tensor<f32>, rng: &mut Rng, path: ConvPath) -> Result<(Tensor<f32>, LayerCache)> {
        let bn_mode = if self.trainable { Mode::Train } else { Mode::Infer };
        Ok(match &mut self.kind {
            LayerKind::ConvBn(c) => {
                let (y, cache) = c.forward_record(x, bn_mode, path)?;
                (y, LayerCache::ConvBn(cache))
            }
            LayerKind::Bottleneck(b) => {
                let (y, cache) = b.forward_record(x, bn_mode, path)?;
                (y, LayerCache::Bottleneck(cache))
            }
            LayerKind::GlobalAvgPool => (global_avg_pool(x)?, LayerCache::GlobalAvgPool(x.shape())),
            LayerKind::Dropout { rate } => {
                let (y, mask) = ops::dropout(x, *rate, rng);
                (y, LayerCache::Dropout(mask))
            }
            LayerKind::Linear(p) => (linear(x, p)?, LayerCache::Linear(x.clone())),
            LayerKind::Softmax => (ops::softmax(x)?, LayerCache::Softmax),
        })
    }

    /// Returns the input gradient (if `need_input`) and this layer's
    /// learnable-parameter gradients in [`Layer::learnable`] order.
    pub fn backward(&self, cache: &LayerCache, grad: Tensor<f32>, need_input: bool) -> Result<(Option<Tensor<f32>>, Vec<Vec<f32>>)> {
        match (&self.kind, cache) {
            (LayerKind::ConvBn(c), LayerCache::ConvBn(cache)) => c.backward(cache, grad, need_input),
            (LayerKind::Bottleneck(b), LayerCache::Bottleneck(cache)) => b.backward(cache, grad, need_input),
            (LayerKind::GlobalAvgPool, LayerCache::GlobalAvgPool(shape)) => {
                Ok((Some(global_avg_pool_backward(*shape, &grad)?), vec![]))
            }
            (LayerKind::Dropout { .. }, LayerCache::Dropout(mask)) => {
                let mut g = grad;
                if g.len() != mask.len() {
                    return Err(Error::shape("dropout", "gradient size differs from the forward mask"));
                }
                g.data_mut().iter_mut().zip(mask).for_each(|(v, &m)| *v *= m);
                Ok((Some(g), vec![]))
            }
            (LayerKind::Linear(p), LayerCache::Linear(input)) => {
                let g = linear_backward(input, p, &grad)?;
                Ok((Some(g.input), vec![g.weight, g.bias]))
            }
            (LayerKind::Softmax, LayerCache::Softmax) => Err(Error::InvalidArgument(
                "softmax layer is differentiated together with the loss".into(),
            )),
            _ => Err(Error::MissingContext),
        }
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let [n, c, _, _] = input;
        match &self.kind {
            LayerKind::ConvBn(cb) => cb.output_shape(input),
            LayerKind::Bottleneck(b) => {
                let mut s = input;
                for u in b.units() {
                    s = u.output_shape(s)?;
                }
                Ok(s)
            }
            LayerKind::GlobalAvgPool => Ok([n, c, 1, 1]),
            LayerKind::Dropout { .. } | LayerKind::Softmax => Ok(input),
            LayerKind::Linear(p) => Ok([n, p.out_features, 1, 1]),
        }
    }

    /// Learnable tensors (weights, biases, gamma, beta) in canonical order.
    pub fn learnable(&self) -> Vec<&[f32]> {
        match &self.kind {
            LayerKind::ConvBn(c) => c.learnable().to_vec(),
            LayerKind::Bottleneck(b) => b.units().flat_map(|u| u.learnable()).collect(),
            LayerKind::Linear(p) => vec![&p.weight, &p.bias],
            _ => vec![],
        }
    }

    pub fn learnable_mut(&mut self) -> Vec<&mut [f32]> {
        match &mut self.kind {
            LayerKind::ConvBn(c) => c.learnable_mut().into_iter().collect(),
            LayerKind::Bottleneck(b) => b.units_mut().flat_map(|u| u.learnable_mut()).collect(),
            LayerKind::Linear(p) => vec![&mut p.weight, &mut p.bias],
            _ => vec![],
        }
    }

    /// Running statistics, which are stored but never trained.
    pub fn buffers(&self) -> Vec<&[f32]> {
        match &self.kind {
            LayerKind::ConvBn(c) => vec![&c.bn.running_mean, &c.bn.running_var],
            LayerKind::Bottleneck(b) => b
                .units()
                .flat_map(|u| [u.bn.running_mean.as_slice(), u.bn.running_var.as_slice()])
                .collect(),
            _ => vec![],
        }
    }

    /// Every stored tensor (learnable and buffers) with a stable name and shape.
    pub fn tensors(&self) -> Vec<NamedTensor<'_>> {
        let mut out = Vec::new();
        match &self.kind {
            LayerKind::ConvBn(c) => push_conv_bn(&mut out, self.name.clone(), c),
            LayerKind::Bottleneck(b) => {
                if let Some(e) = &b.expand {
                    push_conv_bn(&mut out, format!("{}.expand", self.name), e);
                }
                push_conv_bn(&mut out, format!("{}.depthwise", self.name), &b.depthwise);
                push_conv_bn(&mut out, format!("{}.project", self.name), &b.project);
            }
            LayerKind::Linear(p) => {
                out.push(NamedTensor {
                    name: format!("{}.weight", self.name),
                    shape: vec![p.out_features, p.in_features],
                    data: &p.weight,
                });
                out.push(NamedTensor {
                    name: format!("{}.bias", self.name),
                    shape: vec![p.out_features],
                    data: &p.bias,
                });
            }
            _ => {}
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<NamedTensorMut<'_>> {
        let mut out = Vec::new();
        let name = self.name.clone();
        match &mut self.kind {
            LayerKind::ConvBn(c) => push_conv_bn_mut(&mut out, name, c),
            LayerKind::Bottleneck(b) => {
                if let Some(e) = &mut b.expand {
                    push_conv_bn_mut(&mut out, format!("{name}.expand"), e);
                }
                push_conv_bn_mut(&mut out, format!("{name}.depthwise"), &mut b.depthwise);
                push_conv_bn_mut(&mut out, format!("{name}.project"), &mut b.project);
            }
            LayerKind::Linear(p) => {
                let shape = vec![p.out_features, p.in_features];
                let bias_shape = vec![p.out_features];
                out.push(NamedTensorMut {
                    name: format!("{name}.weight"),
                    shape,
                    data: &mut p.weight,
                });
                out.push(NamedTensorMut {
                    name: format!("{name}.bias"),
                    shape: bias_shape,
                    data: &mut p.bias,
                });
            }
            _ => {}
        }
        out
    }
}

fn push_conv_bn<'a>(out: &mut Vec<NamedTensor<'a>>, prefix: String, c: &'a ConvBn) {
    let ch = c.bn.channels();
    out.push(NamedTensor {
        name: format!("{prefix}.weight"),
        shape: c.conv.weight.shape().to_vec(),
        data: c.conv.weight.data(),
    });
    for (suffix, data) in [
        ("bn.gamma", &c.bn.gamma),
        ("bn.beta", &c.bn.beta),
        ("bn.running_mean", &c.bn.running_mean),
        ("bn.running_var", &c.bn.running_var),
    ] {
        out.push(NamedTensor {
            name: format!("{prefix}.{suffix}"),
            shape: vec![ch],
            data,
        });
    }
}

fn push_conv_bn_mut<'a>(out: &mut Vec<NamedTensorMut<'a>>, prefix: String, c: &'a mut ConvBn) {
    let ch = c.bn.channels();
    let shape = c.conv.weight.shape().to_vec();
    out.push(NamedTensorMut {
        name: format!("{prefix}.weight"),
        shape,
        data: c.conv.weight.data_mut(),
    });
    let bn = &mut c.bn;
    for (suffix, data) in [
        ("bn.gamma", &mut bn.gamma),
        ("bn.beta", &mut bn.beta),
        ("bn.running_mean", &mut bn.running_mean),
        ("bn.running_var", &mut bn.running_var),
    ] {
        out.push(NamedTensorMut {
            name: format!("{prefix}.{suffix}"),
            shape: vec![ch],
            data,
        });
    }
}

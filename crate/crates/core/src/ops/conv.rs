//! Full and depthwise 2-D convolution (cross-correlation, symmetric zero padding).
//!
//! Every kernel has two interchangeable implementations: direct loops
//! ([`ConvPath::Naive`]) and im2col followed by GEMM ([`ConvPath::Gemm`]).

use crate::error::{Error, Result};
use crate::ops::gemm::{dot, gemm_nn, gemm_nt, gemm_tn};
use crate::ops::im2col::{col2im, im2col, Window};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ConvPath {
    Naive,
    #[default]
    Gemm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T = f32> {
    /// (Cout, Cin, kh, kw); depthwise kernels are (C, 1, kh, kw).
    pub weight: Tensor<T>,
    pub bias: Option<Vec<T>>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Scalar> ConvParams<T> {
    pub fn new(weight: Tensor<T>, stride: usize, padding: usize) -> Self {
        Self {
            weight,
            bias: None,
            stride,
            padding,
        }
    }

    pub fn with_bias(mut self, bias: Vec<T>) -> Self {
        self.bias = Some(bias);
        self
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    fn validate(&self, op: &'static str) -> Result<()> {
        let [cout, _, kh, kw] = self.weight.shape();
        if kh == 0 || kw == 0 {
            return Err(Error::shape(op, format!("kernel extent {kh}x{kw} must be at least 1x1")));
        }
        if self.stride == 0 {
            return Err(Error::InvalidArgument(format!("{op}: stride must be >= 1")));
        }
        if let Some(b) = &self.bias {
            if b.len() != cout {
                return Err(Error::shape(op, format!("bias length {} != out channels {cout}", b.len())));
            }
        }
        Ok(())
    }
}

/// Output extent `(size + 2·pad − k) / stride + 1`, floored. Errors when the
/// padded input is smaller than the kernel.
pub fn output_extent(size: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = size + 2 * pad;
    if padded < kernel {
        return Err(Error::shape(
            "conv2d",
            format!("padded input extent {padded} is smaller than kernel extent {kernel}"),
        ));
    }
    Ok((padded - kernel) / stride + 1)
}

fn window<T: Scalar>(op: &'static str, input: &Tensor<T>, params: &ConvParams<T>, channels: usize) -> Result<Window> {
    let [_, _, h, w] = input.shape();
    let [_, _, kh, kw] = params.weight.shape();
    Ok(Window {
        channels,
        in_h: h,
        in_w: w,
        kh,
        kw,
        stride: params.stride,
        pad: params.padding,
        out_h: output_extent(h, kh, params.stride, params.padding).map_err(|e| retag(e, op))?,
        out_w: output_extent(w, kw, params.stride, params.padding).map_err(|e| retag(e, op))?,
    })
}

fn retag(e: Error, op: &'static str) -> Error {
    match e {
        Error::Shape { detail, .. } => Error::Shape { op, detail },
        other => other,
    }
}

fn check_full<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<Window> {
    params.validate("conv2d")?;
    let [_, cin, _, _] = params.weight.shape();
    if input.channels() != cin {
        return Err(Error::shape(
            "conv2d",
            format!("input channels C={} but weight expects Cin={cin}", input.channels()),
        ));
    }
    window("conv2d", input, params, cin)
}

fn check_depthwise<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<Window> {
    params.validate("depthwise_conv2d")?;
    let [c, one, _, _] = params.weight.shape();
    if one != 1 || c != input.channels() {
        return Err(Error::shape(
            "depthwise_conv2d",
            format!(
                "weight {:?} must be (C, 1, kh, kw) with C equal to input channels {}",
                params.weight.shape(),
                input.channels()
            ),
        ));
    }
    window("depthwise_conv2d", input, params, c)
}

pub fn conv2d<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>, path: ConvPath) -> Result<Tensor<T>> {
    let win = check_full(input, params)?;
    let out = match path {
        ConvPath::Naive => conv2d_naive(input, params, &win),
        ConvPath::Gemm => conv2d_gemm(input, params, &win),
    };
    out.ensure_finite("conv2d")
}

fn conv2d_naive<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>, win: &Window) -> Tensor<T> {
    let n = input.batch();
    let cout = params.out_channels();
    let w = &params.weight;
    let mut out = Tensor::zeros([n, cout, win.out_h, win.out_w]);
    let mut idx = 0;
    for b in 0..n {
        for co in 0..cout {
            let bias = params.bias.as_ref().map_or(T::zero(), |bv| bv[co]);
            for oy in 0..win.out_h {
                for ox in 0..win.out_w {
                    let mut acc = bias;
                    for ci in 0..win.channels {
                        for ky in 0..win.kh {
                            let iy = (oy * win.stride + ky) as isize - win.pad as isize;
                            if iy < 0 || iy >= win.in_h as isize {
                                continue;
                            }
                            for kx in 0..win.kw {
                                let ix = (ox * win.stride + kx) as isize - win.pad as isize;
                                if ix < 0 || ix >= win.in_w as isize {
                                    continue;
                                }
                                acc += input.at([b, ci, iy as usize, ix as usize]) * w.at([co, ci, ky, kx]);
                            }
                        }
                    }
                    out.data_mut()[idx] = acc;
                    idx += 1;
                }
            }
        }
    }
    out
}

fn conv2d_gemm<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>, win: &Window) -> Tensor<T> {
    let n = input.batch();
    let cout = params.out_channels();
    let (k, p) = (win.col_rows(), win.col_cols());
    let mut out = Tensor::zeros([n, cout, win.out_h, win.out_w]);
    let mut col = if win.is_pointwise_identity() { Vec::new() } else { vec![T::zero(); k * p] };
    for b in 0..n {
        let image = input.item(b);
        let cols: &[T] = if win.is_pointwise_identity() {
            image
        } else {
            im2col(win, image, &mut col);
            &col
        };
        let dst = out.item_mut(b);
        gemm_nn(cout, p, k, params.weight.data(), cols, dst, false);
        if let Some(bias) = &params.bias {
            for (row, &bv) in dst.chunks_exact_mut(p).zip(bias) {
                row.iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    out
}

/// Per-channel spatial convolution with a (C, 1, kh, kw) kernel.
pub fn depthwise_conv2d<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>, path: ConvPath) -> Result<Tensor<T>> {
    let win = check_depthwise(input, params)?;
    let out = match path {
        ConvPath::Naive => depthwise_naive(input, params, &win),
        ConvPath::Gemm => depthwise_gemm(input, params, &win),
    };
    out.ensure_finite("depthwise_conv2d")
}

fn depthwise_naive<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>, win: &Window) -> Tensor<T> {
    let n = input.batch();
    let w = &params.weight;
    let mut out = Tensor::zeros([n, win.channels, win.out_h, win.out_w]);
    let mut idx = 0;
    for b in 0..n {
        for c in 0..win.channels {
            let bias = params.bias.as_ref().map_or(T::zero(), |bv| bv[c]);
            for oy in 0..win.out_h {
                for ox in 0..win.out_w {
                    let mut acc = bias;
                    for ky in 0..win.kh {
                        let iy = (oy * win.stride + ky) as isize - win.pad as isize;
                        if iy < 0 || iy >= win.in_h as isize {
                            continue;
                        }
                        for kx in 0..win.kw {
                            let ix = (ox * win.stride + kx) as isize - win.pad as isize;
                            if ix < 0 || ix >= win.in_w as isize {
                                continue;
                            }
                            acc += input.at([b, c, iy as usize, ix as usize]) * w.at([c, 0, ky, kx]);
                        }
                    }
                    out.data_mut()[idx] = acc;
                    idx += 1;
                }
            }
        }
    }
    out
}

fn single_channel(win: &Window) -> Window {
    Window { channels: 1, ..*win }
}

fn depthwise_gemm<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>, win: &Window) -> Tensor<T> {
    let n = input.batch();
    let plane_win = single_channel(win);
    let (k, p) = (plane_win.col_rows(), plane_win.col_cols());
    let in_plane = win.in_h * win.in_w;
    let mut out = Tensor::zeros([n, win.channels, win.out_h, win.out_w]);
    let mut col = vec![T::zero(); k * p];
    let weight = params.weight.data();
    for b in 0..n {
        let image = input.item(b);
        let dst = out.item_mut(b);
        for c in 0..win.channels {
            im2col(&plane_win, &image[c * in_plane..(c + 1) * in_plane], &mut col);
            let out_plane = &mut dst[c * p..(c + 1) * p];
            gemm_nn(1, p, k, &weight[c * k..(c + 1) * k], &col, out_plane, false);
            if let Some(bias) = &params.bias {
                out_plane.iter_mut().for_each(|v| *v += bias[c]);
            }
        }
    }
    out
}

/// Gradients of a convolution with respect to its input and parameters.
#[derive(Clone, Debug)]
pub struct ConvGrads<T = f32> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Option<Vec<T>>,
}

fn check_grad<T: Scalar>(op: &'static str, grad: &Tensor<T>, expected: [usize; 4]) -> Result<()> {
    if grad.shape() != expected {
        return Err(Error::shape(
            op,
            format!("grad_output {:?} != forward output {expected:?}", grad.shape()),
        ));
    }
    Ok(())
}

/// Backward pass of [`conv2d`]. `need_input` = false skips the input gradient
/// (returned as an empty tensor) for the first layer of a network.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
    grad_out: &Tensor<T>,
    need_input: bool,
) -> Result<ConvGrads<T>> {
    let win = check_full(input, params)?;
    let n = input.batch();
    let cout = params.out_channels();
    check_grad("conv2d", grad_out, [n, cout, win.out_h, win.out_w])?;
    let (k, p) = (win.col_rows(), win.col_cols());

    let mut grad_w = Tensor::zeros(params.weight.shape());
    let mut grad_in = if need_input { Tensor::zeros(input.shape()) } else { Tensor::zeros([0, 0, 0, 0]) };
    let identity = win.is_pointwise_identity();
    let mut col = if identity { Vec::new() } else { vec![T::zero(); k * p] };
    let mut dcol = if need_input && !identity { vec![T::zero(); k * p] } else { Vec::new() };
    for b in 0..n {
        let dy = grad_out.item(b);
        let cols: &[T] = if identity {
            input.item(b)
        } else {
            im2col(&win, input.item(b), &mut col);
            &col
        };
        gemm_nt(cout, k, p, dy, cols, grad_w.data_mut(), true);
        if need_input {
            if identity {
                gemm_tn(k, p, cout, params.weight.data(), dy, grad_in.item_mut(b), false);
            } else {
                gemm_tn(k, p, cout, params.weight.data(), dy, &mut dcol, false);
                col2im(&win, &dcol, grad_in.item_mut(b));
            }
        }
    }
    let grad_b = params.bias.as_ref().map(|_| channel_sums(grad_out));
    Ok(ConvGrads {
        input: grad_in,
        weight: grad_w,
        bias: grad_b,
    })
}

/// Backward pass of [`depthwise_conv2d`].
pub fn depthwise_conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let win = check_depthwise(input, params)?;
    let n = input.batch();
    check_grad("depthwise_conv2d", grad_out, [n, win.channels, win.out_h, win.out_w])?;
    let plane_win = single_channel(&win);
    let (k, p) = (plane_win.col_rows(), plane_win.col_cols());
    let in_plane = win.in_h * win.in_w;

    let mut grad_w = Tensor::zeros(params.weight.shape());
    let mut grad_in = Tensor::zeros(input.shape());
    let mut col = vec![T::zero(); k * p];
    let mut dcol = vec![T::zero(); k * p];
    let weight = params.weight.data();
    for b in 0..n {
        let image = input.item(b);
        let dy = grad_out.item(b);
        let dx = grad_in.item_mut(b);
        for c in 0..win.channels {
            let dy_c = &dy[c * p..(c + 1) * p];
            im2col(&plane_win, &image[c * in_plane..(c + 1) * in_plane], &mut col);
            let gw = &mut grad_w.data_mut()[c * k..(c + 1) * k];
            for (r, g) in gw.iter_mut().enumerate() {
                *g += dot(dy_c, &col[r * p..(r + 1) * p]);
            }
            let w_c = &weight[c * k..(c + 1) * k];
            for (r, &wv) in w_c.iter().enumerate() {
                for (d, &g) in dcol[r * p..(r + 1) * p].iter_mut().zip(dy_c) {
                    *d = wv * g;
                }
            }
            col2im(&plane_win, &dcol, &mut dx[c * in_plane..(c + 1) * in_plane]);
        }
    }
    let grad_b = params.bias.as_ref().map(|_| channel_sums(grad_out));
    Ok(ConvGrads {
        input: grad_in,
        weight: grad_w,
        bias: grad_b,
    })
}

/// Sum over (N, H, W) for each channel.
pub(crate) fn channel_sums<T: Scalar>(t: &Tensor<T>) -> Vec<T> {
    let [n, c, h, w] = t.shape();
    let plane = h * w;
    let mut sums = vec![T::zero(); c];
    for b in 0..n {
        for (ch, s) in sums.iter_mut().enumerate() {
            let start = (b * c + ch) * plane;
            *s += t.data()[start..start + plane].iter().copied().sum::<T>();
        }
    }
    sums
}

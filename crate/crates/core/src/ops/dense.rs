//! Global average pooling, fully connected layer and softmax: the classifier head.

use crate::error::{Error, Result};
use crate::ops::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::tensor::{Scalar, Tensor};

/// Mean over H·W for every (n, c); output is (N, C, 1, 1).
pub fn global_avg_pool<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.shape();
    if h == 0 || w == 0 {
        return Err(Error::shape("global_avg_pool", "spatial extent is zero"));
    }
    let plane = h * w;
    let inv = T::from_usize_lossy(plane).recip();
    let data = input
        .data()
        .chunks_exact(plane)
        .map(|p| p.iter().copied().sum::<T>() * inv)
        .collect();
    Tensor::new([n, c, 1, 1], data)
}

/// Spreads each pooled gradient evenly over its H·W positions.
pub fn global_avg_pool_backward<T: Scalar>(input_shape: [usize; 4], grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = input_shape;
    if grad_out.shape() != [n, c, 1, 1] {
        return Err(Error::shape(
            "global_avg_pool",
            format!("grad_output {:?} != ({n}, {c}, 1, 1)", grad_out.shape()),
        ));
    }
    let plane = h * w;
    let inv = T::from_usize_lossy(plane).recip();
    let mut data = Vec::with_capacity(n * c * plane);
    for &g in grad_out.data() {
        data.extend(std::iter::repeat(g * inv).take(plane));
    }
    Tensor::new(input_shape, data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearParams<T = f32> {
    pub in_features: usize,
    pub out_features: usize,
    /// Row-major (out_features, in_features).
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> LinearParams<T> {
    pub fn new(in_features: usize, out_features: usize, weight: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if weight.len() != in_features * out_features || bias.len() != out_features {
            return Err(Error::shape(
                "linear",
                format!(
                    "weight len {} / bias len {} do not fit ({out_features}, {in_features})",
                    weight.len(),
                    bias.len()
                ),
            ));
        }
        Ok(Self {
            in_features,
            out_features,
            weight,
            bias,
        })
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        if input.item_len() != self.in_features {
            return Err(Error::shape(
                "linear",
                format!(
                    "input has {} features per item, weight expects F={}",
                    input.item_len(),
                    self.in_features
                ),
            ));
        }
        Ok(())
    }
}

/// `y = x · Wᵀ + b` with each batch item flattened to `in_features`.
pub fn linear<T: Scalar>(input: &Tensor<T>, params: &LinearParams<T>) -> Result<Tensor<T>> {
    params.check_input(input)?;
    let n = input.batch();
    let (f, o) = (params.in_features, params.out_features);
    let mut out = vec![T::zero(); n * o];
    gemm_nt(n, o, f, input.data(), &params.weight, &mut out, false);
    for row in out.chunks_exact_mut(o) {
        for (v, &b) in row.iter_mut().zip(&params.bias) {
            *v += b;
        }
    }
    Tensor::new([n, o, 1, 1], out)?.ensure_finite("linear")
}

pub struct LinearGrads<T = f32> {
    pub input: Tensor<T>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

pub fn linear_backward<T: Scalar>(input: &Tensor<T>, params: &LinearParams<T>, grad_out: &Tensor<T>) -> Result<LinearGrads<T>> {
    params.check_input(input)?;
    let n = input.batch();
    let (f, o) = (params.in_features, params.out_features);
    if grad_out.shape() != [n, o, 1, 1] {
        return Err(Error::shape(
            "linear",
            format!("grad_output {:?} != ({n}, {o}, 1, 1)", grad_out.shape()),
        ));
    }
    let mut dw = vec![T::zero(); o * f];
    gemm_tn(o, f, n, grad_out.data(), input.data(), &mut dw, false);
    let mut dx = vec![T::zero(); n * f];
    gemm_nn(n, f, o, grad_out.data(), &params.weight, &mut dx, false);
    let mut db = vec![T::zero(); o];
    for row in grad_out.data().chunks_exact(o) {
        for (d, &g) in db.iter_mut().zip(row) {
            *d += g;
        }
    }
    Ok(LinearGrads {
        input: Tensor::new(input.shape(), dx)?,
        weight: dw,
        bias: db,
    })
}

/// Row-wise softmax over each batch item's flattened values, with
/// max-subtraction so large logits do not overflow.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let k = logits.item_len();
    if k == 0 {
        return Err(Error::shape("softmax", "K must be at least 1"));
    }
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out.ensure_finite("softmax")
}

/// Vector-Jacobian product of softmax given its output `p`: `p ⊙ (g − Σ p·g)`.
pub fn softmax_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if output.shape() != grad_out.shape() {
        return Err(Error::shape(
            "softmax",
            format!("grad_output {:?} != output {:?}", grad_out.shape(), output.shape()),
        ));
    }
    let k = output.item_len();
    let mut dx = Vec::with_capacity(output.len());
    for (p, g) in output.data().chunks_exact(k).zip(grad_out.data().chunks_exact(k)) {
        let s: T = p.iter().zip(g).map(|(&a, &b)| a * b).sum();
        dx.extend(p.iter().zip(g).map(|(&a, &b)| a * (b - s)));
    }
    Tensor::new(output.shape(), dx)
}

/// Gradient of mean cross-entropy with respect to the logits feeding a
/// softmax: `(p − onehot(label)) / N`.
pub fn softmax_cross_entropy_backward<T: Scalar>(probs: &Tensor<T>, labels: &[usize], scale: T) -> Result<Tensor<T>> {
    let n = probs.batch();
    let k = probs.item_len();
    if labels.len() != n {
        return Err(Error::shape("cross_entropy", format!("{} labels for batch of {n}", labels.len())));
    }
    let inv_n = T::from_usize_lossy(n).recip() * scale;
    let mut grad = probs.clone();
    for (row, &label) in grad.data_mut().chunks_exact_mut(k).zip(labels) {
        if label >= k {
            return Err(Error::InvalidArgument(format!("label {label} out of range for {k} classes")));
        }
        row[label] -= T::one();
        row.iter_mut().for_each(|v| *v *= inv_n);
    }
    Ok(grad)
}

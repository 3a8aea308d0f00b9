//! Per-channel batch normalization.

use crate::error::{Error, Result};
use crate::ops::Mode;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams<T = f32> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub eps: T,
    /// Weight of the newest batch statistic in the running averages.
    pub momentum: T,
}

impl<T: Scalar> BatchNormParams<T> {
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            eps: T::from_f64_lossy(1e-5),
            momentum: T::from_f64_lossy(0.1),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, input: &Tensor<T>) -> Result<()> {
        let c = self.channels();
        if [self.beta.len(), self.running_mean.len(), self.running_var.len()]
            .iter()
            .any(|&l| l != c)
        {
            return Err(Error::shape("batchnorm", "parameter vectors differ in length"));
        }
        if input.channels() != c {
            return Err(Error::shape(
                "batchnorm",
                format!("input has C={} channels, parameters have {c}", input.channels()),
            ));
        }
        Ok(())
    }
}

/// Values saved by the forward pass for [`batchnorm_backward`].
#[derive(Clone, Debug)]
pub struct BatchNormContext<T = f32> {
    pub mode: Mode,
    /// Normalized input before the affine transform.
    pub x_hat: Tensor<T>,
    /// `1 / sqrt(var + eps)` per channel, with batch or running variance per mode.
    pub inv_std: Vec<T>,
    /// Train mode only: per-channel batch mean and biased variance.
    pub batch_stats: Option<(Vec<T>, Vec<T>)>,
}

/// Train mode normalizes with batch statistics over (N, H, W) and folds them
/// into the running statistics; infer mode uses the running statistics only.
pub fn batchnorm<T: Scalar>(input: &Tensor<T>, params: &mut BatchNormParams<T>, mode: Mode) -> Result<Tensor<T>> {
    let (out, ctx) = batchnorm_forward(input, params, mode)?;
    update_running_stats(params, &ctx);
    Ok(out)
}

/// Momentum update of the running statistics from a train-mode context; the
/// running variance takes the unbiased batch variance.
pub fn update_running_stats<T: Scalar>(params: &mut BatchNormParams<T>, ctx: &BatchNormContext<T>) {
    let Some((mean, var)) = &ctx.batch_stats else {
        return;
    };
    let [n, _, h, w] = ctx.x_hat.shape();
    let count = n * h * w;
    let mom = params.momentum;
    let unbias = if count > 1 {
        T::from_usize_lossy(count) / T::from_usize_lossy(count - 1)
    } else {
        T::one()
    };
    for ch in 0..params.channels() {
        params.running_mean[ch] = (T::one() - mom) * params.running_mean[ch] + mom * mean[ch];
        params.running_var[ch] = (T::one() - mom) * params.running_var[ch] + mom * var[ch] * unbias;
    }
}

/// Normalizes without touching `params`; pair with [`update_running_stats`].
pub fn batchnorm_forward<T: Scalar>(
    input: &Tensor<T>,
    params: &BatchNormParams<T>,
    mode: Mode,
) -> Result<(Tensor<T>, BatchNormContext<T>)> {
    params.check(input)?;
    let [n, c, h, w] = input.shape();
    let plane = h * w;
    let count = n * plane;
    let (mean, inv_std, batch_stats) = match mode {
        Mode::Infer => {
            let inv: Vec<T> = params
                .running_var
                .iter()
                .map(|&v| (v + params.eps).sqrt().recip())
                .collect();
            (params.running_mean.clone(), inv, None)
        }
        Mode::Train => {
            if count == 0 {
                return Err(Error::shape("batchnorm", "empty batch in train mode"));
            }
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for ch in 0..c {
                let mut sum = T::zero();
                for b in 0..n {
                    let start = (b * c + ch) * plane;
                    sum += input.data()[start..start + plane].iter().copied().sum::<T>();
                }
                let m = sum / T::from_usize_lossy(count);
                let mut sq = T::zero();
                for b in 0..n {
                    let start = (b * c + ch) * plane;
                    sq += input.data()[start..start + plane]
                        .iter()
                        .map(|&x| (x - m) * (x - m))
                        .sum::<T>();
                }
                mean[ch] = m;
                var[ch] = sq / T::from_usize_lossy(count);
            }
            let inv = var.iter().map(|&v| (v + params.eps).sqrt().recip()).collect();
            (mean.clone(), inv, Some((mean, var)))
        }
    };

    let mut x_hat = Tensor::zeros(input.shape());
    let mut out = Tensor::zeros(input.shape());
    for b in 0..n {
        for ch in 0..c {
            let start = (b * c + ch) * plane;
            let (m, s, g, be) = (mean[ch], inv_std[ch], params.gamma[ch], params.beta[ch]);
            let src = &input.data()[start..start + plane];
            let xh = &mut x_hat.data_mut()[start..start + plane];
            for (d, &x) in xh.iter_mut().zip(src) {
                *d = (x - m) * s;
            }
            let dst = &mut out.data_mut()[start..start + plane];
            for (d, &v) in dst.iter_mut().zip(xh.iter()) {
                *d = g * v + be;
            }
        }
    }
    let out = out.ensure_finite("batchnorm")?;
    Ok((
        out,
        BatchNormContext {
            mode,
            x_hat,
            inv_std,
            batch_stats,
        },
    ))
}

pub struct BatchNormGrads<T = f32> {
    pub input: Tensor<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

pub fn batchnorm_backward<T: Scalar>(
    ctx: &BatchNormContext<T>,
    gamma: &[T],
    grad_out: &Tensor<T>,
) -> Result<BatchNormGrads<T>> {
    if grad_out.shape() != ctx.x_hat.shape() {
        return Err(Error::shape(
            "batchnorm",
            format!("grad_output {:?} != forward output {:?}", grad_out.shape(), ctx.x_hat.shape()),
        ));
    }
    let [n, c, h, w] = grad_out.shape();
    let plane = h * w;
    let count = T::from_usize_lossy(n * plane);
    let mut d_gamma = vec![T::zero(); c];
    let mut d_beta = vec![T::zero(); c];
    for b in 0..n {
        for ch in 0..c {
            let start = (b * c + ch) * plane;
            let dy = &grad_out.data()[start..start + plane];
            let xh = &ctx.x_hat.data()[start..start + plane];
            d_beta[ch] += dy.iter().copied().sum::<T>();
            d_gamma[ch] += dy.iter().zip(xh).map(|(&g, &x)| g * x).sum::<T>();
        }
    }
    let mut dx = Tensor::zeros(grad_out.shape());
    for b in 0..n {
        for ch in 0..c {
            let start = (b * c + ch) * plane;
            let dy = &grad_out.data()[start..start + plane];
            let xh = &ctx.x_hat.data()[start..start + plane];
            let scale = gamma[ch] * ctx.inv_std[ch];
            let dst = &mut dx.data_mut()[start..start + plane];
            match ctx.mode {
                Mode::Infer => {
                    for (d, &g) in dst.iter_mut().zip(dy) {
                        *d = scale * g;
                    }
                }
                Mode::Train => {
                    let (sb, sg) = (d_beta[ch] / count, d_gamma[ch] / count);
                    for ((d, &g), &x) in dst.iter_mut().zip(dy).zip(xh) {
                        *d = scale * (g - sb - x * sg);
                    }
                }
            }
        }
    }
    Ok(BatchNormGrads {
        input: dx,
        gamma: d_gamma,
        beta: d_beta,
    })
}

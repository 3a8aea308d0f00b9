//! Analytic backward passes against double-precision central differences.
//! Each check returns the largest relative error it saw.

use maskwatch::data::Rng;
use maskwatch::ops::{
    batchnorm_forward, conv2d, depthwise_conv2d, dropout, global_avg_pool, linear, op_backward, relu6, softmax,
    BatchNormParams, ConvParams, ConvPath, LinearParams, Mode, OpGrads, SavedContext,
};
use maskwatch::Tensor;

const EPS: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-4;

fn random(shape: [usize; 4], rng: &mut Rng, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.uniform(lo, hi))
}

fn rel_err(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

/// Checks every input and parameter entry of `f` against `grads`, where the
/// scalar objective is `Σ r ⊙ f(x, params)`. Returns the largest relative error.
fn check<F>(x: &Tensor<f64>, params: &[Vec<f64>], r: &Tensor<f64>, grads: &OpGrads<f64>, f: F) -> f64
where
    F: Fn(&Tensor<f64>, &[Vec<f64>]) -> Tensor<f64>,
{
    let objective = |x: &Tensor<f64>, p: &[Vec<f64>]| -> f64 {
        f(x, p).data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
    };
    let mut worst = 0.0f64;
    let mut xv = x.clone();
    for i in 0..x.len() {
        let orig = xv.data()[i];
        xv.data_mut()[i] = orig + EPS;
        let plus = objective(&xv, params);
        xv.data_mut()[i] = orig - EPS;
        let minus = objective(&xv, params);
        xv.data_mut()[i] = orig;
        worst = worst.max(rel_err(grads.input.data()[i], (plus - minus) / (2.0 * EPS)));
    }
    let mut pv = params.to_vec();
    for (t, g) in grads.params.iter().enumerate() {
        for i in 0..pv[t].len() {
            let orig = pv[t][i];
            pv[t][i] = orig + EPS;
            let plus = objective(x, &pv);
            pv[t][i] = orig - EPS;
            let minus = objective(x, &pv);
            pv[t][i] = orig;
            worst = worst.max(rel_err(g[i], (plus - minus) / (2.0 * EPS)));
        }
    }
    worst
}

fn conv_params(weight: &[f64], shape: [usize; 4], bias: Option<&[f64]>, stride: usize, pad: usize) -> ConvParams<f64> {
    let p = ConvParams::new(Tensor::new(shape, weight.to_vec()).unwrap(), stride, pad);
    match bias {
        Some(b) => p.with_bias(b.to_vec()),
        None => p,
    }
}

pub fn conv2d_gradients() -> f64 {
    let mut worst = 0.0f64;
    let mut rng = Rng::new(11);
    for (path, stride, pad, k) in [
        (ConvPath::Naive, 1, 1, 3),
        (ConvPath::Gemm, 2, 1, 3),
        (ConvPath::Gemm, 1, 0, 1),
        (ConvPath::Naive, 2, 0, 3),
    ] {
        let x = random([2, 3, 6, 5], &mut rng, -1.0, 1.0);
        let shape = [4, 3, k, k];
        let w: Vec<f64> = random(shape, &mut rng, -0.5, 0.5).into_data();
        let b: Vec<f64> = (0..4).map(|_| rng.uniform(-0.5, 0.5)).collect();
        let params = conv_params(&w, shape, Some(&b), stride, pad);
        let y = conv2d(&x, &params, path).unwrap();
        let r = random(y.shape(), &mut rng, -1.0, 1.0);
        let ctx = SavedContext::Conv2d { input: x.clone(), params };
        let grads = op_backward(Some(&ctx), &r).unwrap();
        let err = check(&x, &[w, b], &r, &grads, |x, p| {
            conv2d(x, &conv_params(&p[0], shape, Some(&p[1]), stride, pad), path).unwrap()
        });
        worst = worst.max(err);
    }
    worst
}

pub fn depthwise_gradients() -> f64 {
    let mut worst = 0.0f64;
    let mut rng = Rng::new(12);
    for (path, stride) in [(ConvPath::Naive, 1), (ConvPath::Gemm, 1), (ConvPath::Gemm, 2), (ConvPath::Naive, 2)] {
        let x = random([2, 4, 7, 6], &mut rng, -1.0, 1.0);
        let shape = [4, 1, 3, 3];
        let w: Vec<f64> = random(shape, &mut rng, -0.5, 0.5).into_data();
        let params = conv_params(&w, shape, None, stride, 1);
        let y = depthwise_conv2d(&x, &params, path).unwrap();
        let r = random(y.shape(), &mut rng, -1.0, 1.0);
        let ctx = SavedContext::DepthwiseConv2d { input: x.clone(), params };
        let grads = op_backward(Some(&ctx), &r).unwrap();
        let err = check(&x, &[w], &r, &grads, |x, p| {
            depthwise_conv2d(x, &conv_params(&p[0], shape, None, stride, 1), path).unwrap()
        });
        worst = worst.max(err);
    }
    worst
}

pub fn relu6_gradient_away_from_kinks() -> f64 {
    let mut worst = 0.0f64;
    let mut rng = Rng::new(13);
    // Values at least 0.01 from 0 and 6 so no perturbation crosses a kink.
    let x = Tensor::from_fn([2, 3, 4, 4], |_| {
        let v = rng.uniform(-2.0, 8.0);
        if (v.abs() < 0.01) || ((v - 6.0).abs() < 0.01) {
            v + 0.05
        } else {
            v
        }
    });
    let r = random(x.shape(), &mut rng, -1.0, 1.0);
    let grads = op_backward(Some(&SavedContext::Relu6 { input: x.clone() }), &r).unwrap();
    let err = check(&x, &[], &r, &grads, |x, _| relu6(x));
    worst = worst.max(err);
    worst
}

fn bn_params(gamma: &[f64], beta: &[f64], rng: &mut Rng) -> BatchNormParams<f64> {
    let mut p = BatchNormParams::identity(gamma.len());
    p.gamma = gamma.to_vec();
    p.beta = beta.to_vec();
    p.running_mean = (0..gamma.len()).map(|_| rng.uniform(-0.3, 0.3)).collect();
    p.running_var = (0..gamma.len()).map(|_| rng.uniform(0.5, 1.5)).collect();
    p
}

pub fn batchnorm_gradients_both_modes() -> f64 {
    let mut worst = 0.0f64;
    for mode in [Mode::Train, Mode::Infer] {
        let mut rng = Rng::new(14);
        let x = random([3, 4, 3, 3], &mut rng, -2.0, 2.0);
        let gamma: Vec<f64> = (0..4).map(|_| rng.uniform(0.5, 1.5)).collect();
        let beta: Vec<f64> = (0..4).map(|_| rng.uniform(-0.5, 0.5)).collect();
        let params = bn_params(&gamma, &beta, &mut Rng::new(99));
        let (y, ctx) = batchnorm_forward(&x, &params, mode).unwrap();
        let r = random(y.shape(), &mut rng, -1.0, 1.0);
        let saved = SavedContext::BatchNorm {
            ctx,
            gamma: gamma.clone(),
        };
        let grads = op_backward(Some(&saved), &r).unwrap();
        let err = check(&x, &[gamma, beta], &r, &grads, |x, p| {
            batchnorm_forward(x, &bn_params(&p[0], &p[1], &mut Rng::new(99)), mode)
                .unwrap()
                .0
        });
        worst = worst.max(err);
    }
    worst
}

pub fn global_avg_pool_gradient() -> f64 {
    let mut worst = 0.0f64;
    let mut rng = Rng::new(15);
    let x = random([2, 3, 4, 5], &mut rng, -1.0, 1.0);
    let r = random([2, 3, 1, 1], &mut rng, -1.0, 1.0);
    let ctx = SavedContext::GlobalAvgPool { input_shape: x.shape() };
    let grads = op_backward(Some(&ctx), &r).unwrap();
    let err = check(&x, &[], &r, &grads, |x, _| global_avg_pool(x).unwrap());
    worst = worst.max(err);
    worst
}

pub fn linear_gradients() -> f64 {
    let mut worst = 0.0f64;
    let mut rng = Rng::new(16);
    let x = random([3, 5, 1, 1], &mut rng, -1.0, 1.0);
    let w: Vec<f64> = (0..15).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let b: Vec<f64> = (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let params = LinearParams::new(5, 3, w.clone(), b.clone()).unwrap();
    let r = random([3, 3, 1, 1], &mut rng, -1.0, 1.0);
    let ctx = SavedContext::Linear { input: x.clone(), params };
    let grads = op_backward(Some(&ctx), &r).unwrap();
    let err = check(&x, &[w, b], &r, &grads, |x, p| {
        linear(x, &LinearParams::new(5, 3, p[0].clone(), p[1].clone()).unwrap()).unwrap()
    });
    worst = worst.max(err);
    worst
}

pub fn softmax_gradient() -> f64 {
    let mut worst = 0.0f64;
    let mut rng = Rng::new(17);
    let x = random([3, 4, 1, 1], &mut rng, -2.0, 2.0);
    let r = random(x.shape(), &mut rng, -1.0, 1.0);
    let ctx = SavedContext::Softmax { output: softmax(&x).unwrap() };
    let grads = op_backward(Some(&ctx), &r).unwrap();
    let err = check(&x, &[], &r, &grads, |x, _| softmax(x).unwrap());
    worst = worst.max(err);
    worst
}

pub fn softmax_cross_entropy_gradient() -> f64 {
    let mut worst = 0.0f64;
    let mut rng = Rng::new(18);
    let x = random([4, 3, 1, 1], &mut rng, -2.0, 2.0);
    let labels = vec![0, 2, 1, 2];
    let scale = Tensor::new([1, 1, 1, 1], vec![0.7]).unwrap();
    let ctx = SavedContext::SoftmaxCrossEntropy {
        probs: softmax(&x).unwrap(),
        labels: labels.clone(),
    };
    let grads = op_backward(Some(&ctx), &scale).unwrap();
    let err = check(&x, &[], &scale, &grads, |x, _| {
        let p = softmax(x).unwrap();
        let k = p.item_len();
        let loss = labels
            .iter()
            .enumerate()
            .map(|(n, &l)| -p.data()[n * k + l].ln())
            .sum::<f64>()
            / labels.len() as f64;
        Tensor::new([1, 1, 1, 1], vec![loss]).unwrap()
    });
    worst = worst.max(err);
    worst
}

pub fn dropout_gradient_is_its_mask() -> f64 {
    let mut worst = 0.0f64;
    let mut rng = Rng::new(19);
    let x = random([2, 3, 3, 3], &mut rng, -1.0, 1.0);
    let (_, mask) = dropout(&x, 0.4, &mut Rng::new(5));
    let r = random(x.shape(), &mut rng, -1.0, 1.0);
    let analytic = OpGrads {
        input: Tensor::new(x.shape(), r.data().iter().zip(&mask).map(|(g, m)| g * m).collect()).unwrap(),
        params: vec![],
    };
    let err = check(&x, &[], &r, &analytic, |x, _| dropout(x, 0.4, &mut Rng::new(5)).0);
    worst = worst.max(err);
    assert!(mask.iter().any(|&m| m == 0.0) && mask.iter().any(|&m| m > 1.0));
    worst
}

/// Every check, by name.
pub fn all() -> Vec<(&'static str, f64)> {
    vec![
        ("conv2d", conv2d_gradients()),
        ("depthwise", depthwise_gradients()),
        ("relu6", relu6_gradient_away_from_kinks()),
        ("batchnorm", batchnorm_gradients_both_modes()),
        ("global_avg_pool", global_avg_pool_gradient()),
        ("linear", linear_gradients()),
        ("softmax", softmax_gradient()),
        ("softmax_cross_entropy", softmax_cross_entropy_gradient()),
        ("dropout", dropout_gradient_is_its_mask()),
    ]
}

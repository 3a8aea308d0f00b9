//! Runs one convolution through the naive and im2col+GEMM paths and compares them.
//!
//! cargo run --release --example conv_kernels

use std::time::Instant;

use maskwatch::data::Rng;
use maskwatch::ops::{conv2d, depthwise_conv2d, ConvParams, ConvPath};
use maskwatch::Tensor;

fn main() -> maskwatch::Result<()> {
    let mut rng = Rng::new(1);
    let mut random = |shape| Tensor::from_fn(shape, |_| rng.uniform(-1.0, 1.0) as f32);
    let x = random([1, 32, 56, 56]);
    let full = ConvParams::new(random([64, 32, 3, 3]), 1, 1);
    let depthwise = ConvParams::new(random([32, 1, 3, 3]), 2, 1);

    for (name, run) in [
        ("conv2d 3x3", Box::new(|p| conv2d(&x, &full, p)) as Box<dyn Fn(ConvPath) -> _>),
        ("depthwise 3x3/2", Box::new(|p| depthwise_conv2d(&x, &depthwise, p))),
    ] {
        let t = Instant::now();
        let naive = run(ConvPath::Naive)?;
        let naive_ms = t.elapsed().as_secs_f64() * 1e3;
        let t = Instant::now();
        let gemm = run(ConvPath::Gemm)?;
        let gemm_ms = t.elapsed().as_secs_f64() * 1e3;
        let max_diff = naive
            .data()
            .iter()
            .zip(gemm.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        println!(
            "{name:<16} output {:?}  naive {naive_ms:.2} ms  gemm {gemm_ms:.2} ms  max |diff| {max_diff:.2e}",
            gemm.shape()
        );
    }
    Ok(())
}

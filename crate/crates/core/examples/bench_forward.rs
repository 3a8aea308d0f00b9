//! Times each layer of a forward pass on the naive and GEMM convolution paths.
//!
//! cargo run --release --example bench_forward -- [resolution] [width]

use maskwatch::cli::bench_forward;
use maskwatch::model::ModelConfig;

fn main() -> maskwatch::Result<()> {
    let mut args = std::env::args().skip(1);
    let input_resolution = args.next().and_then(|a| a.parse().ok()).unwrap_or(224);
    let width_multiplier = args.next().and_then(|a| a.parse().ok()).unwrap_or(1.0);
    let config = ModelConfig { input_resolution, width_multiplier, ..ModelConfig::default() };
    println!("{}", bench_forward(config, 1, 3, 0)?.table());
    Ok(())
}

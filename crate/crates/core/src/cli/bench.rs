use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::data::Rng;
use crate::error::Result;
use crate::model::{Model, ModelConfig};
use crate::ops::ConvPath;
use crate::tensor::Tensor;

/// Median per-layer forward times of both convolution paths.
#[derive(Clone, Debug)]
pub struct BenchReport {
    pub config: ModelConfig,
    pub batch: usize,
    pub repeat: usize,
    /// Layer name, naive median, gemm median.
    pub layers: Vec<(String, Duration, Duration)>,
    pub naive_total: Duration,
    pub gemm_total: Duration,
}

impl BenchReport {
    /// How many times faster the gemm path is than the naive one.
    pub fn speedup(&self) -> f64 {
        self.naive_total.as_secs_f64() / self.gemm_total.as_secs_f64()
    }

    pub fn table(&self) -> String {
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        let mut s = format!("{:<12} {:>12} {:>12} {:>8}\n", "layer", "naive_ms", "gemm_ms", "speedup");
        for (name, naive, gemm) in &self.layers {
            let ratio = naive.as_secs_f64() / gemm.as_secs_f64().max(1e-12);
            let _ = writeln!(s, "{name:<12} {:>12.3} {:>12.3} {ratio:>7.2}x", ms(*naive), ms(*gemm));
        }
        let per_frame = |d: Duration| ms(d) / self.batch as f64;
        let _ = writeln!(
            s,
            "{:<12} {:>12.3} {:>12.3} {:>7.2}x",
            "total",
            ms(self.naive_total),
            ms(self.gemm_total),
            self.speedup()
        );
        let _ = writeln!(
            s,
            "ms/frame: naive {:.3}  gemm {:.3}  (median of {}, batch {})",
            per_frame(self.naive_total),
            per_frame(self.gemm_total),
            self.repeat,
            self.batch
        );
        let _ = write!(s, "speedup {:.2}x", self.speedup());
        s
    }
}

fn median(mut v: Vec<Duration>) -> Duration {
    v.sort();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2
    }
}

fn timed_forward(model: &Model, x: &Tensor<f32>) -> Result<Vec<Duration>> {
    let mut h = x.clone();
    let mut times = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        let t = Instant::now();
        h = layer.forward_infer(&h, model.path)?;
        times.push(t.elapsed());
    }
    Ok(times)
}

/// Times `repeat` inference passes per convolution path on one random batch.
pub fn bench_forward(config: ModelConfig, batch: usize, repeat: usize, seed: u64) -> Result<BenchReport> {
    let repeat = repeat.max(1);
    let mut model = Model::new(config, seed)?;
    let r = config.input_resolution;
    let mut rng = Rng::new(seed ^ 0x5eed);
    let x = Tensor::new(
        [batch.max(1), 3, r, r],
        (0..batch.max(1) * 3 * r * r).map(|_| rng.uniform(-1.0, 1.0) as f32).collect(),
    )?;
    let mut per_path = Vec::new();
    for path in [ConvPath::Naive, ConvPath::Gemm] {
        model.path = path;
        let runs: Vec<Vec<Duration>> = (0..repeat).map(|_| timed_forward(&model, &x)).collect::<Result<_>>()?;
        let layers: Vec<Duration> = (0..model.layers.len())
            .map(|i| median(runs.iter().map(|r| r[i]).collect()))
            .collect();
        let total = median(runs.iter().map(|r| r.iter().sum()).collect());
        per_path.push((layers, total));
    }
    let (gemm, naive) = (per_path.pop().expect("two paths"), per_path.pop().expect("two paths"));
    Ok(BenchReport {
        config,
        batch: batch.max(1),
        repeat,
        layers: model
            .layers
            .iter()
            .zip(naive.0.iter().zip(&gemm.0))
            .map(|(l, (n, g))| (l.name.clone(), *n, *g))
            .collect(),
        naive_total: naive.1,
        gemm_total: gemm.1,
    })
}

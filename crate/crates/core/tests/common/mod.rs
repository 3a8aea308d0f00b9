//! Independent reference implementations and fixture builders shared by the
//! integration tests and the acceptance runner.
#![allow(dead_code)]

pub mod gradients;

use chrono::{TimeZone, Utc};
use maskwatch::data::{synth_face, Image, Label, Rng};
use maskwatch::detect::{BBox, Detection};
use maskwatch::monitor::{DetectionRecord, RecordLog};
use maskwatch::ops::{conv2d, depthwise_conv2d, ConvParams, ConvPath};
use maskwatch::Tensor;

/// Direct convolution accumulated in f64, written independently of the library.
pub fn conv_reference(
    x: &Tensor<f32>,
    w: &Tensor<f32>,
    bias: Option<&[f32]>,
    stride: usize,
    pad: usize,
    depthwise: bool,
) -> Tensor<f32> {
    let [n, cin, h, wd] = x.shape();
    let [cout, per_group, kh, kw] = w.shape();
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut out = Vec::with_capacity(n * cout * oh * ow);
    for b in 0..n {
        for o in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.map_or(0.0, |b| b[o] as f64);
                    for g in 0..per_group {
                        let c = if depthwise { o } else { g };
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let xv = x.data()[((b * cin + c) * h + iy as usize) * wd + ix as usize] as f64;
                                let wv = w.data()[((o * per_group + g) * kh + ky) * kw + kx] as f64;
                                acc += xv * wv;
                            }
                        }
                    }
                    out.push(acc as f32);
                }
            }
        }
    }
    Tensor::new([n, cout, oh, ow], out).unwrap()
}

/// Largest errors over the randomized cases: (gemm vs naive, naive vs reference, gemm vs reference).
#[derive(Clone, Copy, Debug, Default)]
pub struct ConvErrors {
    pub cases: usize,
    pub gemm_vs_naive: f64,
    pub naive_vs_reference: f64,
    pub gemm_vs_reference: f64,
}

impl ConvErrors {
    fn absorb(&mut self, gemm: &Tensor<f32>, naive: &Tensor<f32>, reference: &Tensor<f32>) {
        self.cases += 1;
        self.gemm_vs_naive = self.gemm_vs_naive.max(gemm.max_rel_diff(naive));
        self.naive_vs_reference = self.naive_vs_reference.max(naive.max_rel_diff(reference));
        self.gemm_vs_reference = self.gemm_vs_reference.max(gemm.max_rel_diff(reference));
    }

    pub fn worst(&self) -> f64 {
        self.gemm_vs_naive.max(self.naive_vs_reference).max(self.gemm_vs_reference)
    }
}

fn random_tensor(shape: [usize; 4], rng: &mut Rng) -> Tensor<f32> {
    Tensor::from_fn(shape, |_| rng.uniform(-1.0, 1.0) as f32)
}

pub fn standard_conv_cases(count: usize, seed: u64) -> ConvErrors {
    let mut rng = Rng::new(seed);
    let mut errors = ConvErrors::default();
    while errors.cases < count {
        let k = [1, 3, 5][rng.below(3)];
        let stride = 1 + rng.below(2);
        let pad = rng.below(k / 2 + 2);
        let (h, w) = (3 + rng.below(10), 3 + rng.below(10));
        if h + 2 * pad < k || w + 2 * pad < k {
            continue;
        }
        let (n, cin, cout) = (1 + rng.below(2), 1 + rng.below(16), 1 + rng.below(16));
        let x = random_tensor([n, cin, h, w], &mut rng);
        let weight = random_tensor([cout, cin, k, k], &mut rng);
        let bias: Option<Vec<f32>> = (rng.below(2) == 1).then(|| (0..cout).map(|_| rng.uniform(-1.0, 1.0) as f32).collect());
        let mut p = ConvParams::new(weight.clone(), stride, pad);
        if let Some(b) = &bias {
            p = p.with_bias(b.clone());
        }
        let gemm = conv2d(&x, &p, ConvPath::Gemm).unwrap();
        let naive = conv2d(&x, &p, ConvPath::Naive).unwrap();
        let reference = conv_reference(&x, &weight, bias.as_deref(), stride, pad, false);
        errors.absorb(&gemm, &naive, &reference);
    }
    errors
}

pub fn depthwise_conv_cases(count: usize, seed: u64) -> ConvErrors {
    let mut rng = Rng::new(seed);
    let mut errors = ConvErrors::default();
    while errors.cases < count {
        let stride = 1 + rng.below(2);
        let pad = rng.below(2);
        let (h, w) = (3 + rng.below(14), 3 + rng.below(14));
        let (n, c) = (1 + rng.below(2), 1 + rng.below(24));
        let x = random_tensor([n, c, h, w], &mut rng);
        let weight = random_tensor([c, 1, 3, 3], &mut rng);
        let p = ConvParams::new(weight.clone(), stride, pad);
        let gemm = depthwise_conv2d(&x, &p, ConvPath::Gemm).unwrap();
        let naive = depthwise_conv2d(&x, &p, ConvPath::Naive).unwrap();
        let reference = conv_reference(&x, &weight, None, stride, pad, true);
        errors.absorb(&gemm, &naive, &reference);
    }
    errors
}

/// Alert frames (1-based) for a violation pattern, found by looking back
/// from every frame: the streak is the run of violations ending there that
/// started after the previous alert, and the cooldown is the distance to it.
pub fn brute_force_alerts(violations: &[bool], k: usize, cooldown: usize) -> Vec<usize> {
    let mut alerts: Vec<usize> = Vec::new();
    for frame in 1..=violations.len() {
        if !violations[frame - 1] {
            continue;
        }
        let previous = alerts.last().copied().unwrap_or(0);
        let streak = (previous + 1..=frame).rev().take_while(|&f| violations[f - 1]).count();
        let cooled = previous == 0 || frame - previous > cooldown;
        if streak >= k && cooled {
            alerts.push(frame);
        }
    }
    alerts
}

/// Counts recomputed straight from log text with a generic JSON parser.
/// Timestamps share one fixed-width format, so they compare as strings.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LineScan {
    pub frames: usize,
    pub with_mask: usize,
    pub without_mask: usize,
}

impl LineScan {
    pub fn compliance(&self) -> Option<f64> {
        let total = self.with_mask + self.without_mask;
        (total > 0).then(|| self.with_mask as f64 / total as f64)
    }
}

pub fn line_scan(log: &str, start: &str, end: &str) -> LineScan {
    let mut scan = LineScan::default();
    for line in log.lines() {
        let Ok(v) = serde_json::from_str::<serde_json::Value>(line) else { continue };
        let ts = v["ts"].as_str().unwrap();
        if ts < start || ts > end {
            continue;
        }
        scan.frames += 1;
        for d in v["detections"].as_array().unwrap() {
            match d["label"].as_str().unwrap() {
                "with_mask" => scan.with_mask += 1,
                "without_mask" => scan.without_mask += 1,
                other => panic!("unexpected label {other}"),
            }
        }
    }
    scan
}

/// Frames with one synthetic face each at a random position, the sidecar
/// text naming its box, and the face's true label.
pub struct FaceFixture {
    pub frames: Vec<Image>,
    pub sidecar: String,
    pub labels: Vec<Label>,
}

pub fn face_fixture(count: usize, face_size: usize, seed: u64) -> FaceFixture {
    let (fw, fh) = (160, 120);
    let mut rng = Rng::new(seed);
    let mut fixture = FaceFixture {
        frames: Vec::new(),
        sidecar: "# frame x y w h\n".into(),
        labels: Vec::new(),
    };
    for i in 1..=count {
        let label = if rng.below(2) == 0 { Label::WithMask } else { Label::WithoutMask };
        let shade = 60 + rng.below(120) as u8;
        let mut frame = Image::filled(fw, fh, [shade, shade, shade.saturating_add(20)]);
        for px in frame.pixels_mut() {
            *px = px.saturating_add(rng.below(16) as u8);
        }
        let face = synth_face(label, face_size, &mut rng);
        let (x, y) = (rng.below(fw - face_size + 1), rng.below(fh - face_size + 1));
        frame.paste(&face, x, y);
        fixture.sidecar += &format!("{i} {x} {y} {face_size} {face_size}\n");
        fixture.frames.push(frame);
        fixture.labels.push(label);
    }
    fixture
}

/// One record per frame; `true` frames hold an unmasked face at confidence ≥ 0.8.
pub fn violation_records(violations: &[bool], rng: &mut Rng) -> Vec<DetectionRecord> {
    violations
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            // Clean frames mix empty frames, masked faces and low-confidence
            // unmasked faces; violating frames may also contain masked faces.
            let mut detections = Vec::new();
            let face = |label, confidence| Detection {
                bbox: BBox::new(0, 0, 8, 8),
                label,
                confidence,
            };
            if v {
                detections.push(face(Label::WithoutMask, rng.uniform(0.8, 1.0) as f32));
            } else if rng.below(2) == 0 {
                detections.push(face(Label::WithoutMask, rng.uniform(0.5, 0.79) as f32));
            }
            if rng.below(3) == 0 {
                detections.push(face(Label::WithMask, rng.uniform(0.5, 1.0) as f32));
            }
            DetectionRecord {
                timestamp: Utc.timestamp_millis_opt(i as i64 * 40).unwrap(),
                frame_index: i as u64 + 1,
                source_id: "cam".into(),
                detections,
            }
        })
        .collect()
}

pub fn fixture_records(count: usize, seed: u64) -> Vec<DetectionRecord> {
    let mut rng = Rng::new(seed);
    (0..count)
        .map(|i| DetectionRecord {
            timestamp: Utc.timestamp_millis_opt(1_700_000_000_000 + 40 * i as i64 + rng.below(30) as i64).unwrap(),
            frame_index: i as u64 + 1,
            source_id: "gate".into(),
            detections: (0..rng.below(4))
                .map(|_| Detection {
                    bbox: BBox::new(rng.below(100), rng.below(100), 1 + rng.below(50), 1 + rng.below(50)),
                    label: if rng.below(2) == 0 { Label::WithMask } else { Label::WithoutMask },
                    confidence: rng.uniform(0.5, 1.0) as f32,
                })
                .collect(),
        })
        .collect()
}

/// Violation flags recomputed from the raw JSON lines inside the window.
pub fn violations_in(log: &str, start: &str, end: &str, min_conf: f64) -> Vec<bool> {
    log.lines()
        .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .filter(|v| {
            let ts = v["ts"].as_str().unwrap();
            ts >= start && ts <= end
        })
        .map(|v| {
            v["detections"]
                .as_array()
                .unwrap()
                .iter()
                .any(|d| d["label"] == "without_mask" && d["conf"].as_f64().unwrap() >= min_conf)
        })
        .collect()
}

/// Persists `records` to `records.jsonl` under `dir`.
pub fn write_log(dir: &std::path::Path, records: &[DetectionRecord]) -> std::path::PathBuf {
    let path = dir.join("records.jsonl");
    let mut log = RecordLog::open(&path).unwrap();
    for r in records {
        log.persist(r).unwrap();
    }
    assert_eq!(log.written(), records.len());
    path
}

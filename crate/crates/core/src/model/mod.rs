//! MobileNetV2 classifier: construction, inference, recorded training passes,
//! parameter bookkeeping and weight files.

mod config;
mod layers;
mod weights;

use crate::data::{LabeledDataset, Rng};
use crate::error::{Error, Result};
use crate::ops::{self, BatchNormParams, ConvParams, ConvPath, LinearParams};
use crate::tensor::{Shape, Tensor};

pub use config::{scaled_channels, BottleneckSpec, ModelConfig, FEATURE_CHANNELS, STAGES, STEM_CHANNELS};
pub use layers::{Bottleneck, ConvBn, Layer, LayerCache, LayerKind, NamedTensor, NamedTensorMut};
pub use weights::{load_weights, read_weights, save_weights, write_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};

/// Names of the four classification-head layers, in order.
pub const HEAD_LAYERS: [&str; 4] = ["pool", "dropout", "classifier", "softmax"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    All,
    Trainable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub class_names: Vec<String>,
    pub layers: Vec<Layer>,
    /// Convolution implementation used by every forward and backward pass.
    pub path: ConvPath,
}

/// Per-layer caches of one recorded forward pass.
#[derive(Debug)]
pub struct Trace {
    start: usize,
    caches: Vec<LayerCache>,
}

/// Learnable-parameter gradients of every trainable layer, keyed by layer index.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    pub layers: Vec<(usize, Vec<Vec<f32>>)>,
}

impl Gradients {
    pub fn flat(&self) -> impl Iterator<Item = &[f32]> {
        self.layers.iter().flat_map(|(_, g)| g.iter().map(Vec::as_slice))
    }

    /// Euclidean norm over all gradient entries.
    pub fn norm(&self) -> f64 {
        self.flat()
            .flat_map(|g| g.iter())
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }
}

fn he_uniform(rng: &mut Rng, fan_in: usize, len: usize) -> Vec<f32> {
    let bound = (6.0 / fan_in as f64).sqrt();
    (0..len).map(|_| rng.uniform(-bound, bound) as f32).collect()
}

fn conv_bn(rng: &mut Rng, cin: usize, cout: usize, kernel: usize, stride: usize, depthwise: bool, relu6: bool) -> ConvBn {
    let per_group = if depthwise { 1 } else { cin };
    let fan_in = per_group * kernel * kernel;
    let shape = [cout, per_group, kernel, kernel];
    let weight = Tensor::new(shape, he_uniform(rng, fan_in, shape.iter().product())).expect("sized");
    ConvBn {
        conv: ConvParams::new(weight, stride, kernel / 2),
        depthwise,
        bn: BatchNormParams::identity(cout),
        relu6,
    }
}

fn head(config: &ModelConfig, rng: &mut Rng) -> Vec<Layer> {
    let f = config.feature_channels();
    let k = config.num_classes;
    let classifier = LinearParams::new(f, k, he_uniform(rng, f, f * k), vec![0.0; k]).expect("sized");
    let kinds = [
        LayerKind::GlobalAvgPool,
        LayerKind::Dropout {
            rate: config.dropout_rate,
        },
        LayerKind::Linear(classifier),
        LayerKind::Softmax,
    ];
    HEAD_LAYERS
        .iter()
        .zip(kinds)
        .map(|(name, kind)| Layer {
            name: name.to_string(),
            trainable: true,
            kind,
        })
        .collect()
}

impl Model {
    /// Builds the network with He-uniform convolution and classifier weights
    /// drawn from `seed`; batch norm starts as the identity.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(seed);
        let mut layers = Vec::new();
        let stem = config.stem_channels();
        layers.push(Layer {
            name: "stem".into(),
            trainable: true,
            kind: LayerKind::ConvBn(conv_bn(&mut rng, 3, stem, 3, 2, false, true)),
        });
        let blocks = config.bottlenecks();
        let mut last = stem;
        for (i, (stage, spec)) in blocks.into_iter().enumerate() {
            let hidden = spec.hidden_channels();
            let expand = spec
                .has_expand()
                .then(|| conv_bn(&mut rng, spec.in_channels, hidden, 1, 1, false, true));
            let depthwise = conv_bn(&mut rng, hidden, hidden, 3, spec.stride, true, true);
            let project = conv_bn(&mut rng, hidden, spec.out_channels, 1, 1, false, false);
            last = spec.out_channels;
            layers.push(Layer {
                name: format!("block{i}"),
                trainable: true,
                kind: LayerKind::Bottleneck(Bottleneck {
                    spec,
                    stage,
                    expand,
                    depthwise,
                    project,
                }),
            });
        }
        layers.push(Layer {
            name: "features".into(),
            trainable: true,
            kind: LayerKind::ConvBn(conv_bn(&mut rng, last, config.feature_channels(), 1, 1, false, true)),
        });
        layers.extend(head(&config, &mut rng));
        let class_names = if config.num_classes == 2 {
            LabeledDataset::mask_classes()
        } else {
            (0..config.num_classes).map(|i| format!("class{i}")).collect()
        };
        Ok(Self {
            config,
            class_names,
            layers,
            path: ConvPath::default(),
        })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.config.num_classes {
            return Err(Error::InvalidArgument(format!(
                "{} class names for {} classes",
                names.len(),
                self.config.num_classes
            )));
        }
        self.class_names = names;
        Ok(self)
    }

    /// Index of the first layer of the classification head.
    pub fn head_start(&self) -> usize {
        self.layers.len() - HEAD_LAYERS.len()
    }

    /// True when every backbone layer is frozen.
    pub fn backbone_frozen(&self) -> bool {
        self.layers[..self.head_start()].iter().all(|l| !l.trainable)
    }

    pub fn set_backbone_trainable(&mut self, trainable: bool) {
        let start = self.head_start();
        for l in &mut self.layers[..start] {
            l.trainable = trainable;
        }
    }

    /// Replaces the classification head with a freshly initialized one for
    /// `num_classes`, keeping the backbone weights. With `freeze`, only the
    /// new head is trained afterwards.
    pub fn attach_head(&self, num_classes: usize, freeze: bool, seed: u64) -> Result<Model> {
        let config = ModelConfig {
            num_classes,
            ..self.config
        };
        config.validate()?;
        let mut layers = self.layers[..self.head_start()].to_vec();
        for l in &mut layers {
            l.trainable = !freeze;
        }
        layers.extend(head(&config, &mut Rng::new(seed)));
        let class_names = if num_classes == 2 {
            LabeledDataset::mask_classes()
        } else {
            (0..num_classes).map(|i| format!("class{i}")).collect()
        };
        Ok(Model {
            config,
            class_names,
            layers,
            path: self.path,
        })
    }

    /// Makes the classifier ignore its input and always output `probs`:
    /// zero weights, biases `ln p`. Useful as a deterministic stand-in.
    pub fn with_constant_output(mut self, probs: &[f32]) -> Result<Self> {
        if probs.len() != self.config.num_classes || probs.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "{probs:?} is not a positive distribution over {} classes",
                self.config.num_classes
            )));
        }
        for layer in &mut self.layers {
            if let LayerKind::Linear(p) = &mut layer.kind {
                p.weight.iter_mut().for_each(|w| *w = 0.0);
                p.bias = probs.iter().map(|p| p.ln()).collect();
            }
        }
        Ok(self)
    }

    fn check_input(&self, x: &Tensor<f32>) -> Result<()> {
        let r = self.config.input_resolution;
        if x.channels() != 3 || x.height() != r || x.width() != r || x.batch() == 0 {
            return Err(Error::shape(
                "model",
                format!("input {:?} is not (N, 3, {r}, {r}) with N >= 1", x.shape()),
            ));
        }
        Ok(())
    }

    /// Class probabilities, shape (N, K, 1, 1), in inference mode.
    pub fn infer(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward_infer(&h, self.path)?;
        }
        Ok(h)
    }

    /// Pooled backbone features, shape (N, F, 1, 1).
    pub fn features(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers[..=self.head_start()] {
            h = layer.forward_infer(&h, self.path)?;
        }
        Ok(h)
    }

    /// Argmax class and its probability for each item. Ties go to the lowest
    /// class index.
    pub fn predict(&self, x: &Tensor<f32>) -> Result<Vec<(usize, f32)>> {
        let probs = self.infer(x)?;
        Ok((0..probs.batch()).map(|n| argmax(probs.item(n))).collect())
    }

    /// Training-mode forward pass. Layers before the first trainable one run
    /// as in inference and save nothing; from there on, batch norm uses batch
    /// statistics (updating running averages) and dropout is active.
    pub fn forward_train(&mut self, x: &Tensor<f32>, rng: &mut Rng) -> Result<(Tensor<f32>, Trace)> {
        self.check_input(x)?;
        let start = self
            .layers
            .iter()
            .position(|l| l.trainable)
            .ok_or_else(|| Error::InvalidArgument("model has no trainable layers".into()))?;
        let path = self.path;
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len() - start);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            if i < start {
                h = layer.forward_infer(&h, path)?;
            } else {
                let (y, cache) = layer.forward_record(&h, rng, path)?;
                caches.push(cache);
                h = y;
            }
        }
        Ok((h, Trace { start, caches }))
    }

    /// Gradients of mean cross-entropy between `probs` (the output of the
    /// recorded pass) and `labels`.
    pub fn backward(&self, trace: &Trace, probs: &Tensor<f32>, labels: &[usize]) -> Result<Gradients> {
        if !matches!(self.layers.last().map(|l| &l.kind), Some(LayerKind::Softmax)) {
            return Err(Error::InvalidArgument("model does not end in softmax".into()));
        }
        let mut grad = ops::softmax_cross_entropy_backward(probs, labels, 1.0)?;
        let mut out = Vec::new();
        let last = self.layers.len() - 1;
        for i in (trace.start..last).rev() {
            let layer = &self.layers[i];
            let cache = &trace.caches[i - trace.start];
            let (g, params) = layer.backward(cache, grad, i > trace.start)?;
            if layer.trainable && !params.is_empty() {
                out.push((i, params));
            }
            match g {
                Some(g) => grad = g,
                None => break,
            }
        }
        out.reverse();
        Ok(Gradients { layers: out })
    }

    pub fn param_count(&self, scope: Scope) -> usize {
        self.layers
            .iter()
            .filter(|l| scope == Scope::All || l.trainable)
            .flat_map(|l| l.learnable())
            .map(<[f32]>::len)
            .sum()
    }

    /// Batch-norm running statistics, which are not learnable.
    pub fn buffer_count(&self) -> usize {
        self.layers.iter().flat_map(|l| l.buffers()).map(<[f32]>::len).sum()
    }

    /// Output shape after each layer for a batch of one, without running it.
    pub fn shape_trace(&self) -> Result<Vec<(String, Shape)>> {
        let r = self.config.input_resolution;
        let mut shape = [1, 3, r, r];
        let mut out = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            shape = l.output_shape(shape)?;
            out.push((l.name.clone(), shape));
        }
        Ok(out)
    }

    /// Human-readable table of layers, output shapes and parameter counts.
    pub fn summary(&self) -> Result<String> {
        use std::fmt::Write;
        let trace = self.shape_trace()?;
        let mut s = String::new();
        let _ = writeln!(s, "{:<12} {:>22} {:>10} {:>9}", "layer", "output", "params", "trainable");
        for (layer, (name, shape)) in self.layers.iter().zip(&trace) {
            let params: usize = layer.learnable().iter().map(|t| t.len()).sum();
            let _ = writeln!(
                s,
                "{name:<12} {:>22} {params:>10} {:>9}",
                format!("{shape:?}"),
                if layer.trainable { "yes" } else { "no" }
            );
        }
        let _ = writeln!(
            s,
            "total params: {}  trainable: {}  buffers: {}",
            self.param_count(Scope::All),
            self.param_count(Scope::Trainable),
            self.buffer_count()
        );
        Ok(s)
    }
}

/// Index and value of the largest entry; the first maximum wins.
pub fn argmax(values: &[f32]) -> (usize, f32) {
    let mut best = (0, f32::NEG_INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

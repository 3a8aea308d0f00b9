//! Loss, optimizers, the training loop, evaluation and learning-rate sweeps.

mod history;
mod metrics;
mod optim;
mod pretrain;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::data::{batches, PreparedDataset, Rng};
use crate::error::{Error, Result};
use crate::model::{argmax, Gradients, Model};
use crate::tensor::Tensor;

pub use history::{emit_history, significant, EpochRecord, HistoryFormat, TrainingHistory, CSV_HEADER, SERIES};
pub use metrics::{cross_entropy, Metrics};
pub use optim::{optimizer_step, Optimizer, OptimizerState};
pub use pretrain::{cached_backbone, pretrain_backbone, PretrainRecipe};
pub use sweep::{default_learning_rates, sweep, SweepResult, SweepRow};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f32,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub freeze_backbone: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            epochs: 20,
            batch_size: 32,
            optimizer: Optimizer::default(),
            seed: 0,
            freeze_backbone: false,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Stream labels for [`Rng::derive`].
const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

/// Batch size used for inference-only passes.
const EVAL_BATCH: usize = 64;

/// One optimizer step on one batch; returns the batch loss before the step.
pub fn train_step(
    model: &mut Model,
    state: &mut OptimizerState,
    hp: &Hyperparams,
    inputs: &Tensor<f32>,
    labels: &[usize],
    rng: &mut Rng,
) -> Result<f32> {
    let (probs, trace) = model.forward_train(inputs, rng)?;
    let loss = cross_entropy(&probs, labels)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite { op: "loss" });
    }
    let grads = model.backward(&trace, &probs, labels)?;
    apply_gradients(model, state, hp, &grads)?;
    Ok(loss)
}

fn apply_gradients(model: &mut Model, state: &mut OptimizerState, hp: &Hyperparams, grads: &Gradients) -> Result<()> {
    let mut params: Vec<&mut [f32]> = Vec::new();
    let mut wanted = grads.layers.iter().map(|(i, _)| *i).peekable();
    for (i, layer) in model.layers.iter_mut().enumerate() {
        if wanted.peek() == Some(&i) {
            wanted.next();
            params.extend(layer.learnable_mut());
        }
    }
    let g: Vec<&[f32]> = grads.flat().collect();
    optimizer_step(state, hp.optimizer, hp.learning_rate, &mut params, &g)
}

/// Trains `model` for `hp.epochs` epochs of seeded, shuffled batches and
/// evaluates both sets after every epoch. The result depends only on the
/// initial weights, the data and `hp`.
pub fn train(
    mut model: Model,
    train_set: &PreparedDataset,
    val_set: &PreparedDataset,
    hp: &Hyperparams,
) -> Result<(Model, TrainingHistory)> {
    hp.validate()?;
    for (name, set) in [("training", train_set), ("validation", val_set)] {
        if set.is_empty() {
            return Err(Error::Dataset(format!("{name} set is empty")));
        }
        if set.num_classes != model.config.num_classes {
            return Err(Error::Dataset(format!(
                "{name} set has {} classes, model outputs {}",
                set.num_classes, model.config.num_classes
            )));
        }
        if set.resolution != model.config.input_resolution {
            return Err(Error::Dataset(format!(
                "{name} set is {} px, model expects {}",
                set.resolution, model.config.input_resolution
            )));
        }
    }
    if hp.freeze_backbone {
        model.set_backbone_trainable(false);
    }
    let mut state = OptimizerState::default();
    let mut history = TrainingHistory::default();
    for epoch in 1..=hp.epochs {
        let shuffle_seed = Rng::derive(hp.seed, SHUFFLE_STREAM).next_u64() ^ epoch as u64;
        let mut dropout_rng = Rng::derive(hp.seed ^ ((epoch as u64) << 32), DROPOUT_STREAM);
        for (b, batch) in batches(train_set, hp.batch_size, true, shuffle_seed).enumerate() {
            let step = train_step(&mut model, &mut state, hp, &batch.inputs, &batch.labels, &mut dropout_rng);
            match step {
                Ok(_) => {}
                Err(Error::NonFinite { .. }) => {
                    let loss = diverged_loss(&model, &batch.inputs, &batch.labels);
                    return Err(Error::Divergence { epoch, batch: b + 1, loss });
                }
                Err(e) => return Err(e),
            }
        }
        let diverged = |loss| Error::Divergence { epoch, batch: 0, loss };
        let eval = |set| match evaluate(&model, set) {
            Err(Error::NonFinite { .. }) => Err(diverged(f32::NAN)),
            Ok(m) if !m.loss.is_finite() => Err(diverged(m.loss)),
            other => other,
        };
        let tr = eval(train_set)?;
        let va = eval(val_set)?;
        let record = EpochRecord {
            epoch,
            train_loss: tr.loss,
            val_loss: va.loss,
            train_accuracy: tr.accuracy() as f32,
            val_accuracy: va.accuracy() as f32,
        };
        log::info!(
            "epoch {epoch}/{}: train_loss {:.4} val_loss {:.4} train_acc {:.4} val_acc {:.4}",
            hp.epochs,
            record.train_loss,
            record.val_loss,
            record.train_accuracy,
            record.val_accuracy
        );
        history.records.push(record);
    }
    Ok((model, history))
}

fn diverged_loss(model: &Model, inputs: &Tensor<f32>, labels: &[usize]) -> f32 {
    model
        .infer(inputs)
        .ok()
        .and_then(|p| cross_entropy(&p, labels).ok())
        .filter(|l| !l.is_finite())
        .unwrap_or(f32::NAN)
}

/// Inference-mode argmax classification of every item, with mean loss.
pub fn evaluate(model: &Model, dataset: &PreparedDataset) -> Result<Metrics> {
    let mut metrics = Metrics::default();
    let mut loss_sum = 0.0f64;
    for batch in batches(dataset, EVAL_BATCH, false, 0) {
        let probs = model.infer(&batch.inputs)?;
        loss_sum += cross_entropy(&probs, &batch.labels)? as f64 * batch.labels.len() as f64;
        for (n, &actual) in batch.labels.iter().enumerate() {
            metrics.record(argmax(probs.item(n)).0, actual);
        }
    }
    metrics.loss = (loss_sum / dataset.len().max(1) as f64) as f32;
    Ok(metrics)
}

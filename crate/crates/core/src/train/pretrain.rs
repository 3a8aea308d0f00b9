use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{split, synth_shapes, PreparedDataset};
use crate::error::{Error, Result};
use crate::model::{load_weights, save_weights, Model, ModelConfig};
use crate::train::{train, Hyperparams, TrainingHistory};

/// Shape-classification task used to pretrain the backbone before the
/// mask classifier is fine-tuned on top of it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainRecipe {
    pub per_class: usize,
    pub epochs: usize,
    pub learning_rate: f32,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PretrainRecipe {
    fn default() -> Self {
        Self {
            per_class: 2000,
            epochs: 20,
            learning_rate: 3e-3,
            batch_size: 32,
            seed: 7,
        }
    }
}

const SHAPES_SEED_OFFSET: u64 = 1000;
const SHAPES_SPLIT_SEED: u64 = 1;

impl PretrainRecipe {
    /// File name that identifies the backbone this recipe produces for `config`.
    pub fn cache_name(&self, config: &ModelConfig) -> String {
        format!(
            "backbone_r{}_w{}_n{}_e{}_lr{:e}_b{}_s{}.mnv2w",
            config.input_resolution,
            config.width_multiplier,
            self.per_class,
            self.epochs,
            self.learning_rate,
            self.batch_size,
            self.seed
        )
    }
}

/// Trains a fresh network on [`synth_shapes`] and returns it with its history.
pub fn pretrain_backbone(config: ModelConfig, recipe: &PretrainRecipe) -> Result<(Model, TrainingHistory)> {
    let config = ModelConfig { num_classes: 2, ..config };
    let r = config.input_resolution;
    let shapes = synth_shapes(recipe.per_class, r, recipe.seed.wrapping_add(SHAPES_SEED_OFFSET));
    let (tr, va) = split(&shapes, 0.8, SHAPES_SPLIT_SEED)?;
    let hp = Hyperparams {
        learning_rate: recipe.learning_rate,
        epochs: recipe.epochs,
        batch_size: recipe.batch_size,
        seed: recipe.seed,
        ..Hyperparams::default()
    };
    let model = Model::new(config, recipe.seed)?.with_class_names(shapes.class_names.clone())?;
    train(model, &PreparedDataset::new(&tr, r), &PreparedDataset::new(&va, r), &hp)
}

/// Like [`pretrain_backbone`], but reuses a weights file in `cache_dir`
/// written by an earlier call with the same config and recipe.
pub fn cached_backbone(config: ModelConfig, recipe: &PretrainRecipe, cache_dir: &Path) -> Result<(Model, PathBuf)> {
    let path = cache_dir.join(recipe.cache_name(&config));
    if path.exists() {
        let model = load_weights(&path)?;
        let c = model.config;
        if c.input_resolution != config.input_resolution || c.width_multiplier != config.width_multiplier {
            return Err(Error::InvalidArgument(format!("{}: cached backbone has a different shape", path.display())));
        }
        log::info!("using cached backbone {}", path.display());
        return Ok((model, path));
    }
    log::info!("pretraining backbone ({} shapes per class, {} epochs)", recipe.per_class, recipe.epochs);
    let (model, history) = pretrain_backbone(config, recipe)?;
    if let Some(last) = history.last() {
        log::info!("backbone pretraining val accuracy {:.4}", last.val_accuracy);
    }
    std::fs::create_dir_all(cache_dir).map_err(|e| Error::from(e).in_file(cache_dir))?;
    save_weights(&path, &model)?;
    Ok((model, path))
}

//! Fine-tunes the reduced network on generated faces, starting from a backbone
//! pretrained on synthetic shapes, and prints the learning curve.
//!
//! cargo run --release --example train_synthetic -- [per_class] [seed] [lr]
//!
//! The backbone is cached in `.maskwatch-cache/`; the first run builds it.

use std::path::Path;

use maskwatch::data::{split, synth_dataset, PreparedDataset};
use maskwatch::model::ModelConfig;
use maskwatch::train::{cached_backbone, emit_history, evaluate, train, HistoryFormat, Hyperparams, PretrainRecipe};

fn main() -> maskwatch::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let per_class: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(300);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(7);
    let lr: f32 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1e-4);

    let config = ModelConfig::reduced();
    let data = synth_dataset(per_class, config.input_resolution, seed);
    let (train_set, val_set) = split(&data, 0.8, seed)?;
    println!("train: {}  val: {}", train_set.describe_counts(), val_set.describe_counts());
    let train_set = PreparedDataset::new(&train_set, config.input_resolution);
    let val_set = PreparedDataset::new(&val_set, config.input_resolution);

    let (backbone, path) = cached_backbone(config, &PretrainRecipe::default(), Path::new(".maskwatch-cache"))?;
    println!("backbone: {}", path.display());
    let model = backbone.attach_head(2, false, seed)?;

    let hp = Hyperparams { seed, learning_rate: lr, ..Hyperparams::default() };
    let (model, history) = train(model, &train_set, &val_set, &hp)?;
    for r in &history.records {
        println!(
            "epoch {:>2}  train_loss {:.4}  val_loss {:.4}  train_acc {:.4}  val_acc {:.4}",
            r.epoch, r.train_loss, r.val_loss, r.train_accuracy, r.val_accuracy
        );
    }
    println!("validation: {}", evaluate(&model, &val_set)?);
    emit_history(&history, HistoryFormat::Svg, Path::new("history.svg"))?;
    println!("curves written to history.svg");
    Ok(())
}

//! Trains one small model per learning rate and prints the comparison table.
//!
//! cargo run --release --example lr_sweep -- [epochs]

use maskwatch::data::{split, synth_dataset, PreparedDataset};
use maskwatch::model::{Model, ModelConfig};
use maskwatch::train::{default_learning_rates, sweep, Hyperparams};

fn main() -> maskwatch::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    let config = ModelConfig { input_resolution: 32, ..ModelConfig::reduced() };
    let (train_set, val_set) = split(&synth_dataset(60, 32, 1), 0.8, 1)?;
    let train_set = PreparedDataset::new(&train_set, 32);
    let val_set = PreparedDataset::new(&val_set, 32);

    let configs: Vec<Hyperparams> = default_learning_rates()
        .iter()
        .map(|&learning_rate| Hyperparams { learning_rate, epochs, batch_size: 16, seed: 1, ..Hyperparams::default() })
        .collect();
    let result = sweep(&Model::new(config, 1)?, &train_set, &val_set, &configs, 1)?;
    print!("{}", result.to_table());
    Ok(())
}

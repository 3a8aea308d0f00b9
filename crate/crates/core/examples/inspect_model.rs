//! Prints the layer table of the full-size network and round-trips its weights.
//!
//! cargo run --release --example inspect_model -- [num_classes]

use maskwatch::model::{read_weights, write_weights, Model, ModelConfig, Scope};

fn main() -> maskwatch::Result<()> {
    let num_classes = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1000);
    let model = Model::new(ModelConfig { num_classes, ..ModelConfig::default() }, 0)?;
    print!("{}", model.summary()?);

    let bytes = write_weights(&model);
    let back = read_weights(&bytes)?;
    println!(
        "weights file: {} bytes, reloads identical: {}, params {}",
        bytes.len(),
        back == model,
        back.param_count(Scope::All)
    );
    Ok(())
}

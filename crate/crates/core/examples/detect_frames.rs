//! Classifies faces in generated frames and writes annotated copies.
//!
//! cargo run --release --example detect_frames -- [weights.mnv2w] [out_dir]
//!
//! Without weights, an untrained 64 px network is used, so labels are arbitrary.

use std::path::PathBuf;

use maskwatch::data::{synth_face, Image, Label, Rng};
use maskwatch::detect::{process_stream, write_frame_dir, FrameSource, LocatorSpec, StreamOptions};
use maskwatch::model::{load_weights, Model, ModelConfig};
use maskwatch::monitor::DetectionRecord;

fn main() -> maskwatch::Result<()> {
    let mut args = std::env::args().skip(1);
    let model = match args.next().filter(|a| !a.is_empty()) {
        Some(path) => load_weights(path.as_ref())?,
        None => Model::new(ModelConfig::reduced(), 0)?,
    };
    let out = PathBuf::from(args.next().unwrap_or_else(|| "detect-out".into()));
    let res = model.config.input_resolution;

    let mut rng = Rng::new(3);
    let mut sidecar = String::new();
    let frames: Vec<Image> = (1..=8)
        .map(|i| {
            let mut frame = Image::filled(160, 120, [90, 90, 110]);
            let label = if i % 2 == 0 { Label::WithMask } else { Label::WithoutMask };
            let (x, y) = (rng.below(160 - res), rng.below(120 - res));
            frame.paste(&synth_face(label, res, &mut rng), x, y);
            sidecar += &format!("{i} {x} {y} {res} {res}\n");
            frame
        })
        .collect();
    write_frame_dir(&out.join("frames"), &frames)?;
    std::fs::write(out.join("boxes.txt"), sidecar)?;

    let options = StreamOptions { annotate_out: Some(out.join("annotated")), ..StreamOptions::default() };
    let mut records: Vec<DetectionRecord> = Vec::new();
    process_stream(
        &FrameSource::Directory(out.join("frames")),
        &model,
        &LocatorSpec::Sidecar(out.join("boxes.txt")),
        &options,
        &mut [&mut records],
    )?;
    for r in &records {
        println!("{}", r.to_json_line());
    }
    println!("annotated frames in {}", out.join("annotated").display());
    Ok(())
}

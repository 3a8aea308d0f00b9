//! Images, datasets and the seeded random stream.

mod batch;
mod dataset;
mod image;
mod ppm;
mod resize;
mod rng;
mod synth;

pub use batch::{batches, Batch, Batches, PreparedDataset};
pub use dataset::{load_class_folders, split, train_count, Label, LabeledDataset, Sample, CLASS_NAMES};
pub use image::{normalize, Image, Rgb};
pub use ppm::{decode_ppm, encode_ppm, read_ppm, write_ppm};
pub use resize::resize_bilinear;
pub use rng::Rng;
pub use synth::{lower_half_variance, synth_dataset, synth_face, synth_shapes};

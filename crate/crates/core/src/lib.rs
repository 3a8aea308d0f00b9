//! MobileNetV2 built from scratch on CPU kernels, plus a face-mask
//! monitoring pipeline around it: training, frame-stream detection,
//! alerting, persistence and reporting.

pub mod cli;
pub mod data;
pub mod detect;
pub mod error;
pub mod model;
pub mod monitor;
pub mod ops;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};

//! Desk-scale training bench: synthetic cell/tissue scenes, a per-pixel
//! softmax surrogate over handcrafted features, and the experiment
//! harnesses comparing ground-truth formats, Gaussian widths and tissue
//! context.

pub mod error;
pub mod experiments;
pub mod features;
pub mod model;
pub mod scene;
pub mod train;

pub use error::{BenchError, Result};
pub use features::{extract_features, FeatureConfig};
pub use model::PixelModel;
pub use scene::{synth_scene, SynthParams, SynthScene};
pub use train::{train, LossKind, Optimizer, TrainConfig, TrainOutcome, TrainSample};

//! Cell detection toolkit: ground-truth synthesis from point annotations,
//! training objectives, postprocessing of predicted class maps, cell–tissue
//! input composition, test-time augmentation and detection scoring.
//!
//! Pipeline stages:
//!
//! 1. **groundtruth** – circle, hard instance and soft (Gaussian) instance maps.
//! 2. **losses** – generalized Dice and class-weighted MSE with analytic gradients.
//! 3. **augment** – joint geometric/photometric augmentation and oversampling weights.
//! 4. **geometry** – tissue-context composition, label leaking, dihedral TTA, ensembling.
//! 5. **postprocess** – peak and watershed detectors.
//! 6. **eval** – greedy point matching, F1 and per-organ reports.
//!
//! Everything rests on the raster primitives in [`imgproc`].

pub mod annotation;
pub mod augment;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod groundtruth;
pub mod imgproc;
pub mod losses;
pub mod postprocess;
pub mod raster;

pub use annotation::{CellClass, CellPoint, Detection, Pixel, PointAnnotations};
pub use error::{Error, Result};
pub use raster::{BinaryMask, LabelMap, Raster};

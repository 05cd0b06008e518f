//! Synthetic signals, SIREN zoos and editing targets.

pub mod morphology;
pub mod signals;
pub mod zoo;

pub use morphology::{contrast, dilate, erode, morph_gradient, EditTransform};
pub use signals::{gen_signals, SignalKind, SignalParams, SignalSample};
pub use zoo::{build_inr_dataset, InrDataset, InrEntry, Split, ZooConfig, PSNR_FLOOR_DB};

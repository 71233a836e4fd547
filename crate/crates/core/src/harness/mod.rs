//! Synthetic ground truth and evaluation metrics.

pub mod metrics;
pub mod synth;

pub use metrics::{aepe, density, f1_3px, ErrorTally};
pub use synth::{load_scene, make_rds, save_scene, ShiftField, SyntheticScene, DEFAULT_DOT_DENSITY};

//! Stereo pseudo-labels from multi-scale disparity voting, plus the forward
//! numerical core of a recurrent cost-volume disparity network and its
//! self-supervised training objective.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`pyramid`]: resampling, randomized dual pyramids,
//!   flip augmentation, and PFM / PNG16 persistence.
//! - [`matcher`]: windowed NCC/SAD block matching with confidence output.
//! - [`pvm`]: cross-scale consistency voting and the left-right check that
//!   turn raw matches into semi-dense labels.
//! - [`optcore`]: feature cost volumes, the pooled cost pyramid, bounded
//!   lookup, the convolutional GRU update, and upsampling.
//! - [`losses`]: guiding, reconstruction, smoothness, and total losses.
//! - [`harness`]: random-dot stereograms with exact ground truth, and metrics.

pub mod error;
pub mod harness;
pub mod losses;
pub mod matcher;
pub mod optcore;
pub mod pvm;
pub mod pyramid;
pub mod raster;

pub use error::{Error, Result};
pub use matcher::{block_match, match_both_views, BothViews, CostKind, Direction, MatchParams};
pub use pvm::{pvm_pipeline, PvmConfig, PvmOutput, VotingMap, VotingThresholds};
pub use pyramid::{build_dual_pyramids, flip_pair, PyramidSpec};
pub use raster::{ConfidenceMap, DisparityMap, Image};

//! Randomized stereo pyramids, flip augmentation, resampling, and disparity
//! persistence.
//!
//! Level `k` (1-based) of a pyramid is the input pair downsampled by a factor
//! `k + ε`, with `ε` drawn uniformly from `(-1 + g, 1 - g)` for a small guard
//! `g`, and `ε = 0` at `k = 1` so the first level is always the original pair.
//! Two independent groups are drawn: one feeds the left-referenced disparity
//! path, the other the right-referenced path.

mod colorize;
pub mod io;
mod resample;

pub use colorize::colorize_disparity;
pub use io::{load_disparity, save_disparity, DisparityFormat};
pub use resample::resize_bilinear;

pub(crate) use resample::linear_taps;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::Image;

/// Default guard keeping `ε` away from `±1`.
pub const DEFAULT_EPSILON_GUARD: f64 = 0.05;

/// Number of levels and the seed for the random scale perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PyramidSpec {
    pub levels: usize,
    pub seed: u64,
    pub epsilon_guard: f64,
}

impl Default for PyramidSpec {
    fn default() -> Self {
        Self {
            levels: 6,
            seed: 0,
            epsilon_guard: DEFAULT_EPSILON_GUARD,
        }
    }
}

impl PyramidSpec {
    pub fn new(levels: usize, seed: u64) -> Result<Self> {
        let spec = Self {
            levels,
            seed,
            ..Self::default()
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::param("levels", format!("need at least 2, got {}", self.levels)));
        }
        if !(0.0..1.0).contains(&self.epsilon_guard) {
            return Err(Error::param(
                "epsilon_guard",
                format!("must lie in [0, 1), got {}", self.epsilon_guard),
            ));
        }
        Ok(())
    }

    /// Scale factors for both groups: `(left_group, right_group)`, each of
    /// length `levels` with the first entry exactly 1.
    pub fn scale_factors(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let bound = 1.0 - self.epsilon_guard;
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (1..=self.levels)
                .map(|k| {
                    if k == 1 {
                        1.0
                    } else {
                        k as f64 + rng.gen_range(-bound..bound)
                    }
                })
                .collect()
        };
        let left = draw(&mut rng);
        let right = draw(&mut rng);
        Ok((left, right))
    }
}

/// One downsampled stereo pair and the factor that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidLevel {
    /// Nominal factor `k + ε`.
    pub scale: f64,
    pub left: Image,
    pub right: Image,
}

impl PyramidLevel {
    /// Realized horizontal factor `full_width / level_width`, the one that
    /// converts disparities at this level back to full resolution.
    pub fn horizontal_scale(&self, full_width: usize) -> f64 {
        full_width as f64 / self.left.width() as f64
    }
}

/// The two pyramids: one for left-referenced and one for right-referenced
/// matching.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPyramid {
    pub left_group: Vec<PyramidLevel>,
    pub right_group: Vec<PyramidLevel>,
}

fn build_group(left: &Image, right: &Image, scales: &[f64]) -> Result<Vec<PyramidLevel>> {
    scales
        .iter()
        .map(|&scale| {
            if scale == 1.0 {
                return Ok(PyramidLevel {
                    scale,
                    left: left.clone(),
                    right: right.clone(),
                });
            }
            let h = ((left.height() as f64 / scale).round() as usize).max(1);
            let w = ((left.width() as f64 / scale).round() as usize).max(1);
            Ok(PyramidLevel {
                scale,
                left: resize_bilinear(left, h, w)?,
                right: resize_bilinear(right, h, w)?,
            })
        })
        .collect()
}

/// Builds both pyramid groups for a rectified pair.
pub fn build_dual_pyramids(left: &Image, right: &Image, spec: &PyramidSpec) -> Result<DualPyramid> {
    left.ensure_same_size(right)?;
    let (ls, rs) = spec.scale_factors()?;
    Ok(DualPyramid {
        left_group: build_group(left, right, &ls)?,
        right_group: build_group(left, right, &rs)?,
    })
}

/// Mirrors both images and swaps their roles, yielding a new rectified pair
/// whose left view is the mirrored right image.
pub fn flip_pair(left: &Image, right: &Image) -> Result<(Image, Image)> {
    left.ensure_same_size(right)?;
    Ok((right.mirror(), left.mirror()))
}

//! Disparity error metrics over co-valid pixels.

use crate::error::{Error, Result};
use crate::raster::DisparityMap;

/// Errors strictly above this many pixels count as outliers.
pub const OUTLIER_THRESHOLD_PX: f64 = 3.0;

/// Running error totals, mergeable across image pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorTally {
    pub abs_error_sum: f64,
    pub outliers: usize,
    pub count: usize,
}

impl ErrorTally {
    pub fn from_maps(pred: &DisparityMap, truth: &DisparityMap) -> Result<Self> {
        pred.ensure_same_size(truth)?;
        let mut t = ErrorTally::default();
        for k in 0..pred.len() {
            if pred.mask()[k] && truth.mask()[k] {
                let e = (f64::from(pred.values()[k]) - f64::from(truth.values()[k])).abs();
                t.abs_error_sum += e;
                t.outliers += usize::from(e > OUTLIER_THRESHOLD_PX);
                t.count += 1;
            }
        }
        Ok(t)
    }

    pub fn merge(&mut self, other: &ErrorTally) {
        self.abs_error_sum += other.abs_error_sum;
        self.outliers += other.outliers;
        self.count += other.count;
    }

    pub fn aepe(&self) -> Result<f64> {
        self.nonempty()?;
        Ok(self.abs_error_sum / self.count as f64)
    }

    pub fn f1_percent(&self) -> Result<f64> {
        self.nonempty()?;
        Ok(100.0 * self.outliers as f64 / self.count as f64)
    }

    fn nonempty(&self) -> Result<()> {
        if self.count == 0 {
            Err(Error::Empty("no pixels are valid in both maps"))
        } else {
            Ok(())
        }
    }
}

/// Mean absolute disparity error over pixels valid in both maps.
pub fn aepe(pred: &DisparityMap, truth: &DisparityMap) -> Result<f64> {
    ErrorTally::from_maps(pred, truth)?.aepe()
}

/// Percentage of co-valid pixels whose error exceeds 3 px.
pub fn f1_3px(pred: &DisparityMap, truth: &DisparityMap) -> Result<f64> {
    ErrorTally::from_maps(pred, truth)?.f1_percent()
}

/// Percentage of valid pixels.
pub fn density(d: &DisparityMap) -> f64 {
    if d.is_empty() {
        return 0.0;
    }
    100.0 * d.valid_count() as f64 / d.len() as f64
}

//! Raster containers shared by every stage: intensity images, disparity maps
//! with validity masks, and matching-confidence maps.

use crate::error::{Error, Result};

/// Row-major floating-point image with 1 (grayscale) or 3 (RGB) channels.
///
/// Intensities are always finite and within `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

/// ITU-R BT.601 luma weights.
const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimensions {
                height,
                width,
                reason: "image must be non-empty",
            });
        }
        if channels != 1 && channels != 3 {
            return Err(Error::param("channels", format!("expected 1 or 3, got {channels}")));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::BufferLength {
                expected,
                got: data.len(),
            });
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange(format!(
                "intensity {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Single-channel image from a row-major buffer.
    pub fn gray(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(height, width, 1, data)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Grayscale image from a per-pixel function; values are clamped to `[0, 1]`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j).clamp(0.0, 1.0));
            }
        }
        Self::gray(height, width, data)
    }

    /// Caller guarantees the buffer satisfies every invariant.
    pub(crate) fn from_raw(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        debug_assert!(data.iter().all(|v| (0.0..=1.0).contains(v)));
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f32 {
        self.data[(i * self.width + j) * self.channels + c]
    }

    pub fn same_size(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub(crate) fn ensure_same_size(&self, other: &Image) -> Result<()> {
        if self.same_size(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                left_h: self.height,
                left_w: self.width,
                right_h: other.height,
                right_w: other.width,
            })
        }
    }

    /// Luminance conversion; grayscale images are returned unchanged.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|px| (LUMA[0] * px[0] + LUMA[1] * px[1] + LUMA[2] * px[2]).clamp(0.0, 1.0))
            .collect();
        Image::from_raw(self.height, self.width, 1, data)
    }

    /// Left-right mirror.
    pub fn mirror(&self) -> Image {
        let c = self.channels;
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks_exact(self.width * c) {
            for px in row.chunks_exact(c).rev() {
                data.extend_from_slice(px);
            }
        }
        Image::from_raw(self.height, self.width, c, data)
    }
}

/// Per-pixel disparity in pixels with a validity mask.
///
/// Invalid pixels always hold [`DisparityMap::INVALID`] so that two maps that
/// agree on their masks and valid values compare equal.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    height: usize,
    width: usize,
    values: Vec<f32>,
    mask: Vec<bool>,
}

impl DisparityMap {
    /// Sentinel stored at invalid pixels (also the PFM convention for "no data").
    pub const INVALID: f32 = f32::INFINITY;

    pub fn new(height: usize, width: usize, mut values: Vec<f32>, mask: Vec<bool>) -> Result<Self> {
        let n = height * width;
        if values.len() != n {
            return Err(Error::BufferLength {
                expected: n,
                got: values.len(),
            });
        }
        if mask.len() != n {
            return Err(Error::BufferLength {
                expected: n,
                got: mask.len(),
            });
        }
        for (v, &ok) in values.iter_mut().zip(&mask) {
            if !ok {
                *v = Self::INVALID;
            } else if !v.is_finite() {
                return Err(Error::OutOfRange(format!("valid disparity {v} is not finite")));
            }
        }
        Ok(Self {
            height,
            width,
            values,
            mask,
        })
    }

    /// Fully valid map.
    pub fn dense(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        Self::new(height, width, values, vec![true; height * width])
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::dense(height, width, vec![value; height * width])
    }

    pub fn invalid(height: usize, width: usize) -> Self {
        let n = height * width;
        Self {
            height,
            width,
            values: vec![Self::INVALID; n],
            mask: vec![false; n],
        }
    }

    /// Map built from a per-pixel function; `None` marks the pixel invalid.
    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> Option<f32>,
    ) -> Result<Self> {
        let n = height * width;
        let mut values = Vec::with_capacity(n);
        let mut mask = Vec::with_capacity(n);
        for i in 0..height {
            for j in 0..width {
                match f(i, j) {
                    Some(v) => {
                        values.push(v);
                        mask.push(true);
                    }
                    None => {
                        values.push(Self::INVALID);
                        mask.push(false);
                    }
                }
            }
        }
        Self::new(height, width, values, mask)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.width + j]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<f32> {
        let idx = i * self.width + j;
        self.mask[idx].then(|| self.values[idx])
    }

    /// Sets a pixel; `None` (or a non-finite value) invalidates it.
    pub fn set(&mut self, i: usize, j: usize, value: Option<f32>) {
        let idx = i * self.width + j;
        match value {
            Some(v) if v.is_finite() => {
                self.values[idx] = v;
                self.mask[idx] = true;
            }
            _ => {
                self.values[idx] = Self::INVALID;
                self.mask[idx] = false;
            }
        }
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_size(&self, other: &DisparityMap) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub(crate) fn ensure_same_size(&self, other: &DisparityMap) -> Result<()> {
        if self.same_size(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                left_h: self.height,
                left_w: self.width,
                right_h: other.height,
                right_w: other.width,
            })
        }
    }

    /// Left-right mirror of both values and mask (values are not negated).
    pub fn mirror(&self) -> DisparityMap {
        let mut values = Vec::with_capacity(self.values.len());
        let mut mask = Vec::with_capacity(self.mask.len());
        for i in 0..self.height {
            let row = i * self.width..(i + 1) * self.width;
            values.extend(self.values[row.clone()].iter().rev());
            mask.extend(self.mask[row].iter().rev());
        }
        DisparityMap {
            height: self.height,
            width: self.width,
            values,
            mask,
        }
    }
}

/// Per-pixel matching confidence in `[0, 1]`; higher means a better match.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl ConfidenceMap {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        let n = height * width;
        if values.len() != n {
            return Err(Error::BufferLength {
                expected: n,
                got: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange(format!("confidence {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[i * self.width + j]
    }

    pub fn mirror(&self) -> ConfidenceMap {
        let mut values = Vec::with_capacity(self.values.len());
        for row in self.values.chunks_exact(self.width) {
            values.extend(row.iter().rev());
        }
        ConfidenceMap {
            height: self.height,
            width: self.width,
            values,
        }
    }
}

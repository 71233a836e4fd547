//! Training objective: guiding, reconstruction, and smoothness losses.
//!
//! Evaluation only. `L = L_P + λ1 L_R + λ2 L_S`, where `L_P` compares every
//! iterate with the semi-dense labels and `L_R`, `L_S` look at the last one.

use crate::error::{Error, Result};
use crate::pyramid::linear_taps;
use crate::raster::{DisparityMap, Image};

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
    pub alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            lambda2: 0.1,
            gamma: 0.8,
            alpha: 0.85,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, format!("must be finite and non-negative, got {v}")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::param("gamma", format!("must lie in (0, 1], got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::param("alpha", format!("must lie in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }

    /// Normalized weights `γ^(N-i) / Σ γ^(N-k)` for iterates `i = 1..=N`.
    pub fn iterate_weights(&self, n: usize) -> Vec<f64> {
        let raw: Vec<f64> = (1..=n).map(|i| self.gamma.powi((n - i) as i32)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

pub fn huber(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::OutOfRange(format!("huber expects a non-negative argument, got {x}")));
    }
    Ok(if x < 1.0 { x * x / 2.0 } else { x - 0.5 })
}

/// Weighted mean Huber error of every iterate over the valid label pixels.
pub fn guiding_loss(preds: &[DisparityMap], labels: &DisparityMap, cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    if preds.is_empty() {
        return Err(Error::Empty("no predictions"));
    }
    let count = labels.valid_count();
    if count == 0 {
        return Err(Error::Empty("label map has no valid pixels"));
    }
    let weights = cfg.iterate_weights(preds.len());
    let mut loss = 0.0;
    for (pred, w) in preds.iter().zip(weights) {
        pred.ensure_same_size(labels)?;
        let mut sum = 0.0;
        for (n, label) in labels.values().iter().enumerate() {
            if !labels.mask()[n] {
                continue;
            }
            if !pred.mask()[n] {
                return Err(Error::OutOfRange("prediction is invalid at a labelled pixel".into()));
            }
            sum += huber((f64::from(*label) - f64::from(pred.values()[n])).abs())?;
        }
        loss += w * sum / count as f64;
    }
    Ok(loss)
}

/// Samples `right` at `(i, j - d(i, j))` with linear interpolation along the
/// row. Pixels with an invalid disparity or a source outside the image are
/// masked out and set to 0.
pub fn warp_right_to_left(right: &Image, d: &DisparityMap) -> Result<(Image, Vec<bool>)> {
    let (h, w, ch) = (right.height(), right.width(), right.channels());
    if d.height() != h || d.width() != w {
        return Err(Error::DimensionMismatch {
            left_h: d.height(),
            left_w: d.width(),
            right_h: h,
            right_w: w,
        });
    }
    let mut data = vec![0.0f32; h * w * ch];
    let mut mask = vec![false; h * w];
    for i in 0..h {
        for j in 0..w {
            let Some(dv) = d.get(i, j) else { continue };
            let x = j as f64 - f64::from(dv);
            if !(0.0..=(w - 1) as f64).contains(&x) {
                continue;
            }
            let (x0, x1, f) = linear_taps(x, w);
            for c in 0..ch {
                let a = f64::from(right.get(i, x0, c));
                let b = f64::from(right.get(i, x1, c));
                data[(i * w + j) * ch + c] = if f == 0.0 { a as f32 } else { (a * (1.0 - f) + b * f) as f32 };
            }
            mask[i * w + j] = true;
        }
    }
    Ok((Image::from_raw(h, w, ch, data), mask))
}

/// Per-pixel, per-channel SSIM, row-major with channels fastest.
///
/// Statistics use the 3x3 neighbourhood restricted to in-bounds pixels that
/// are set in `mask`. Masked-out centres are reported as 0.
pub fn ssim3_masked(a: &Image, b: &Image, mask: &[bool]) -> Result<Vec<f64>> {
    a.ensure_same_size(b)?;
    let (h, w, ch) = (a.height(), a.width(), a.channels());
    if mask.len() != h * w {
        return Err(Error::BufferLength {
            expected: h * w,
            got: mask.len(),
        });
    }
    let mut out = vec![0.0; h * w * ch];
    let mut xs = Vec::with_capacity(9);
    let mut ys = Vec::with_capacity(9);
    for i in 0..h {
        for j in 0..w {
            if !mask[i * w + j] {
                continue;
            }
            for c in 0..ch {
                xs.clear();
                ys.clear();
                for y in i.saturating_sub(1)..=(i + 1).min(h - 1) {
                    for x in j.saturating_sub(1)..=(j + 1).min(w - 1) {
                        if mask[y * w + x] {
                            xs.push(f64::from(a.get(y, x, c)));
                            ys.push(f64::from(b.get(y, x, c)));
                        }
                    }
                }
                let n = xs.len() as f64;
                let mx = xs.iter().sum::<f64>() / n;
                let my = ys.iter().sum::<f64>() / n;
                let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                for (x, y) in xs.iter().zip(&ys) {
                    vx += (x - mx) * (x - mx);
                    vy += (y - my) * (y - my);
                    cxy += (x - mx) * (y - my);
                }
                let (vx, vy, cxy) = (vx / n, vy / n, cxy / n);
                let s = ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2))
                    / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
                out[(i * w + j) * ch + c] = s.clamp(-1.0, 1.0);
            }
        }
    }
    Ok(out)
}

/// SSIM with 3x3 box statistics over in-bounds neighbours.
pub fn ssim3(a: &Image, b: &Image) -> Result<Vec<f64>> {
    ssim3_masked(a, b, &vec![true; a.height() * a.width()])
}

/// Mean over masked pixels of `α (1 - SSIM) / 2 + (1 - α) |I_l - Î_l|_1`.
///
/// SSIM is averaged over channels and the L1 term summed over them.
pub fn reconstruction_loss(left: &Image, warped: &Image, mask: &[bool], cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    let ssim = ssim3_masked(left, warped, mask)?;
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::Empty("reconstruction mask has no valid pixels"));
    }
    let ch = left.channels();
    let mut sum = 0.0;
    for (p, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        let mean_ssim = ssim[p * ch..(p + 1) * ch].iter().sum::<f64>() / ch as f64;
        let l1: f64 = (0..ch)
            .map(|c| (f64::from(left.data()[p * ch + c]) - f64::from(warped.data()[p * ch + c])).abs())
            .sum();
        sum += cfg.alpha * (1.0 - mean_ssim) / 2.0 + (1.0 - cfg.alpha) * l1;
    }
    Ok(sum / count as f64)
}

/// Edge-aware smoothness with forward differences.
///
/// The horizontal and vertical terms are each averaged over the pixel pairs
/// that exist for them (both disparities valid); a term with no pairs is 0.
pub fn smoothness_loss(d: &DisparityMap, left: &Image) -> Result<f64> {
    let (h, w, ch) = (left.height(), left.width(), left.channels());
    if d.height() != h || d.width() != w {
        return Err(Error::DimensionMismatch {
            left_h: h,
            left_w: w,
            right_h: d.height(),
            right_w: d.width(),
        });
    }
    let grad = |(i0, j0): (usize, usize), (i1, j1): (usize, usize)| -> Option<f64> {
        let a = d.get(i0, j0)?;
        let b = d.get(i1, j1)?;
        let edge: f64 = (0..ch)
            .map(|c| (f64::from(left.get(i1, j1, c)) - f64::from(left.get(i0, j0, c))).abs())
            .sum();
        Some((f64::from(b) - f64::from(a)).abs() * (-edge).exp())
    };
    let mean = |terms: Vec<Option<f64>>| {
        let vals: Vec<f64> = terms.into_iter().flatten().collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    let gx = (0..h)
        .flat_map(|i| (0..w.saturating_sub(1)).map(move |j| (i, j)))
        .map(|(i, j)| grad((i, j), (i, j + 1)))
        .collect();
    let gy = (0..h.saturating_sub(1))
        .flat_map(|i| (0..w).map(move |j| (i, j)))
        .map(|(i, j)| grad((i, j), (i + 1, j)))
        .collect();
    Ok(mean(gx) + mean(gy))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub guiding: f64,
    pub reconstruction: f64,
    pub smoothness: f64,
}

pub fn total_loss(
    preds: &[DisparityMap],
    labels: &DisparityMap,
    left: &Image,
    right: &Image,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    left.ensure_same_size(right)?;
    let guiding = guiding_loss(preds, labels, cfg)?;
    let last = preds.last().ok_or(Error::Empty("no predictions"))?;
    let (warped, mask) = warp_right_to_left(right, last)?;
    let reconstruction = reconstruction_loss(left, &warped, &mask, cfg)?;
    let smoothness = smoothness_loss(last, left)?;
    Ok(LossBreakdown {
        total: guiding + cfg.lambda1 * reconstruction + cfg.lambda2 * smoothness,
        guiding,
        reconstruction,
        smoothness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, |i, j| ((i * 7 + j * 13) % 17) as f32 / 16.0).unwrap()
    }

    #[test]
    fn huber_values() {
        assert_eq!(huber(0.0).unwrap(), 0.0);
        assert_eq!(huber(1.0).unwrap(), 0.5);
        assert!((huber(1.0 - 1e-12).unwrap() - 0.5).abs() < 1e-11);
        assert_eq!(huber(3.0).unwrap(), 2.5);
        assert!(huber(-0.1).is_err());
        assert!(huber(f64::NAN).is_err());
    }

    #[test]
    fn guiding_uniform_error_and_empty() {
        let labels = DisparityMap::from_fn(3, 3, |i, j| if (i + j) % 2 == 0 { Some(5.0) } else { None }).unwrap();
        let pred = DisparityMap::filled(3, 3, 8.0).unwrap();
        let cfg = LossConfig::default();
        assert_eq!(guiding_loss(&[pred], &labels, &cfg).unwrap(), 2.5);
        let exact = DisparityMap::filled(3, 3, 5.0).unwrap();
        assert_eq!(guiding_loss(&[exact], &labels, &cfg).unwrap(), 0.0);
        let empty = DisparityMap::invalid(3, 3);
        assert!(guiding_loss(&[DisparityMap::filled(3, 3, 0.0).unwrap()], &empty, &cfg).is_err());
        assert!(guiding_loss(&[], &labels, &cfg).is_err());
    }

    #[test]
    fn iterate_weights_normalize() {
        let cfg = LossConfig::default();
        let w = cfg.iterate_weights(2);
        assert!((w[0] - 0.8 / 1.8).abs() < 1e-15 && (w[1] - 1.0 / 1.8).abs() < 1e-15);
    }

    #[test]
    fn warp_identity_and_out_of_range() {
        let r = textured(4, 6);
        let (out, mask) = warp_right_to_left(&r, &DisparityMap::filled(4, 6, 0.0).unwrap()).unwrap();
        assert_eq!(out, r);
        assert!(mask.iter().all(|&m| m));
        let (_, mask) = warp_right_to_left(&r, &DisparityMap::filled(4, 6, 2.5).unwrap()).unwrap();
        for i in 0..4 {
            assert_eq!(&mask[i * 6..i * 6 + 6], &[false, false, false, true, true, true]);
        }
    }

    #[test]
    fn ssim_identities() {
        let a = textured(5, 5);
        assert!(ssim3(&a, &a).unwrap().iter().all(|&v| v == 1.0));
        let zero = Image::filled(4, 4, 1, 0.0).unwrap();
        let one = Image::filled(4, 4, 1, 1.0).unwrap();
        let s = ssim3(&zero, &one).unwrap();
        let closed = SSIM_C1 / (1.0 + SSIM_C1);
        assert!(s.iter().all(|&v| (v - closed).abs() < 1e-15 && v < 0.01));
        let b = Image::from_fn(5, 5, |i, j| a.get(i, j, 0) * 0.99 + 0.001).unwrap();
        assert!(ssim3(&a, &b).unwrap().iter().all(|&v| v > 0.99));
    }

    #[test]
    fn reconstruction_cases() {
        let a = textured(4, 4);
        let mask = vec![true; 16];
        let cfg = LossConfig::default();
        assert_eq!(reconstruction_loss(&a, &a, &mask, &cfg).unwrap(), 0.0);
        let base = Image::filled(4, 4, 1, 0.3).unwrap();
        let off = Image::filled(4, 4, 1, 0.5).unwrap();
        let l1 = LossConfig { alpha: 0.0, ..cfg };
        assert!((reconstruction_loss(&base, &off, &mask, &l1).unwrap() - 0.2).abs() < 1e-7);
        assert!(reconstruction_loss(&a, &a, &[false; 16], &cfg).is_err());
    }

    #[test]
    fn smoothness_cases() {
        let flat = Image::filled(4, 6, 1, 0.5).unwrap();
        let ramp = DisparityMap::from_fn(4, 6, |_, j| Some(j as f32)).unwrap();
        assert_eq!(smoothness_loss(&ramp, &flat).unwrap(), 1.0);
        assert_eq!(smoothness_loss(&DisparityMap::filled(4, 6, 7.0).unwrap(), &textured(4, 6)).unwrap(), 0.0);
        assert!(smoothness_loss(&ramp, &textured(4, 6)).unwrap() < 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        assert!(LossConfig { gamma: 0.0, ..LossConfig::default() }.validate().is_err());
        assert!(LossConfig { alpha: 1.5, ..LossConfig::default() }.validate().is_err());
        assert!(LossConfig { lambda1: -1.0, ..LossConfig::default() }.validate().is_err());
    }
}

//! Toy features, the all-pairs cost volume, its pooled pyramid, and lookup.

use rayon::prelude::*;

use super::tensor::Tensor3;
use crate::error::{Error, Result};
use crate::pyramid::linear_taps;
use crate::raster::{DisparityMap, Image};

/// Downsampling factor between the input image and the feature grid.
pub const FEATURE_STRIDE: usize = 8;
/// Default descriptor length.
pub const DEFAULT_FEATURE_CHANNELS: usize = 256;
/// Number of cost volume levels, `M^0..M^3`.
pub const COST_LEVELS: usize = 4;
/// Default lookup distance.
pub const DEFAULT_LOOKUP_RADIUS: usize = 4;

/// Per-cell descriptors on the 1/8 grid: `H x W x C`.
pub type FeatureMap = Tensor3;

/// Channels produced by [`lookup`] for a given distance.
pub fn lookup_channels(radius: usize) -> usize {
    COST_LEVELS * (2 * radius + 1)
}

fn check_divisible(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 || height % FEATURE_STRIDE != 0 || width % FEATURE_STRIDE != 0 {
        return Err(Error::InvalidDimensions {
            height,
            width,
            reason: "dimensions must be positive multiples of 8",
        });
    }
    Ok(())
}

/// Deterministic patch descriptor.
///
/// Each 8x8 cell becomes its mean-subtracted, unit-norm intensities in
/// row-major order, zero-padded or truncated to `channels`. Colour input is
/// converted to luma first. Flat cells give zero vectors.
pub fn toy_features(img: &Image, channels: usize) -> Result<FeatureMap> {
    check_divisible(img.height(), img.width())?;
    if channels == 0 {
        return Err(Error::param("channels", "must be positive"));
    }
    let gray = img.to_gray();
    let (fh, fw) = (img.height() / FEATURE_STRIDE, img.width() / FEATURE_STRIDE);
    let n = FEATURE_STRIDE * FEATURE_STRIDE;
    let mut data = vec![0.0; fh * fw * channels];
    for ci in 0..fh {
        for cj in 0..fw {
            let mut patch = Vec::with_capacity(n);
            for di in 0..FEATURE_STRIDE {
                for dj in 0..FEATURE_STRIDE {
                    patch.push(f64::from(gray.get(ci * FEATURE_STRIDE + di, cj * FEATURE_STRIDE + dj, 0)));
                }
            }
            let mean = patch.iter().sum::<f64>() / n as f64;
            patch.iter_mut().for_each(|v| *v -= mean);
            let norm = patch.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-12 {
                continue;
            }
            let out = &mut data[(ci * fw + cj) * channels..(ci * fw + cj + 1) * channels];
            for (o, v) in out.iter_mut().zip(&patch) {
                *o = v / norm;
            }
        }
    }
    Ok(Tensor3::from_raw(fh, fw, channels, data))
}

/// `M0(i, j, k) = <F_l(i, j, .), F_r(i, k, .)>`, shape `H x W x W`.
pub fn build_cost_volume(fl: &FeatureMap, fr: &FeatureMap) -> Result<Tensor3> {
    if !fl.same_grid(fr) || fl.channels() != fr.channels() {
        return Err(Error::Shape(format!(
            "feature maps differ: {}x{}x{} vs {}x{}x{}",
            fl.height(),
            fl.width(),
            fl.channels(),
            fr.height(),
            fr.width(),
            fr.channels()
        )));
    }
    let (h, w) = (fl.height(), fl.width());
    let rows: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::with_capacity(w * w);
            for j in 0..w {
                let a = fl.pixel(i, j);
                for k in 0..w {
                    row.push(a.iter().zip(fr.pixel(i, k)).map(|(x, y)| x * y).sum());
                }
            }
            row
        })
        .collect();
    Ok(Tensor3::from_raw(h, w, w, rows.concat()))
}

/// `M^0..M^3`, each level halving the last dimension by pairwise means.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolumePyramid {
    levels: Vec<Tensor3>,
}

impl CostVolumePyramid {
    pub fn levels(&self) -> &[Tensor3] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> &Tensor3 {
        &self.levels[k]
    }

    pub fn height(&self) -> usize {
        self.levels[0].height()
    }

    pub fn width(&self) -> usize {
        self.levels[0].width()
    }
}

pub fn pool_pyramid(m0: &Tensor3) -> Result<CostVolumePyramid> {
    let span = 1 << (COST_LEVELS - 1);
    if m0.channels() % span != 0 {
        return Err(Error::Shape(format!(
            "cost volume last dimension {} is not divisible by {span}",
            m0.channels()
        )));
    }
    let mut levels = vec![m0.clone()];
    for _ in 1..COST_LEVELS {
        let prev = levels.last().expect("non-empty");
        let (h, w, n) = (prev.height(), prev.width(), prev.channels() / 2);
        let mut data = Vec::with_capacity(h * w * n);
        for pair in prev.data().chunks_exact(2) {
            data.push((pair[0] + pair[1]) / 2.0);
        }
        levels.push(Tensor3::from_raw(h, w, n, data));
    }
    Ok(CostVolumePyramid { levels })
}

/// Offsets from `j'` in level-0 feature columns covered at `level`.
pub fn lookup_offsets(level: usize, radius: usize) -> Vec<f64> {
    let step = (1usize << level) as f64;
    (-(radius as isize)..=radius as isize).map(|o| o as f64 * step).collect()
}

/// One-sided reach of the coarsest lookup level in input pixels.
pub fn search_range_pixels(radius: usize) -> f64 {
    lookup_offsets(COST_LEVELS - 1, radius)
        .into_iter()
        .map(f64::abs)
        .fold(0.0, f64::max)
        * FEATURE_STRIDE as f64
}

/// Local cost volume around `j - d_s(i, j)`.
///
/// Level `k` is sampled at `(j - d_s) / 2^k + o` for `o` in `-r..=r`, linearly
/// interpolated with positions clamped to the valid range. Channels are
/// level-major: all offsets of `M^0`, then `M^1`, and so on.
pub fn lookup(pyr: &CostVolumePyramid, d_s: &DisparityMap, radius: usize) -> Result<Tensor3> {
    if radius == 0 {
        return Err(Error::param("radius", "must be at least 1"));
    }
    let (h, w) = (pyr.height(), pyr.width());
    if d_s.height() != h || d_s.width() != w {
        return Err(Error::Shape(format!(
            "disparity {}x{} does not match cost volume {h}x{w}",
            d_s.height(),
            d_s.width()
        )));
    }
    if d_s.valid_count() != d_s.len() {
        return Err(Error::OutOfRange("lookup needs a dense disparity estimate".into()));
    }
    let per_level = 2 * radius + 1;
    let channels = COST_LEVELS * per_level;
    let rows: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::with_capacity(w * channels);
            for j in 0..w {
                let target = j as f64 - f64::from(d_s.values()[i * w + j]);
                for (k, level) in pyr.levels.iter().enumerate() {
                    let costs = level.pixel(i, j);
                    let centre = target / (1usize << k) as f64;
                    for o in -(radius as isize)..=radius as isize {
                        let (i0, i1, f) = linear_taps(centre + o as f64, costs.len());
                        row.push(costs[i0] * (1.0 - f) + costs[i1] * f);
                    }
                }
            }
            row
        })
        .collect();
    Ok(Tensor3::from_raw(h, w, channels, rows.concat()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_gives_zero_features() {
        let img = Image::filled(16, 24, 1, 0.4).unwrap();
        let f = toy_features(&img, 256).unwrap();
        assert_eq!((f.height(), f.width(), f.channels()), (2, 3, 256));
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn features_are_unit_norm_and_truncate() {
        let img = Image::from_fn(8, 16, |i, j| ((i * 7 + j * 3) % 5) as f32 / 4.0).unwrap();
        let f = toy_features(&img, 256).unwrap();
        for j in 0..2 {
            let n: f64 = f.pixel(0, j).iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
        assert_eq!(toy_features(&img, 10).unwrap().channels(), 10);
        assert!(toy_features(&Image::filled(12, 16, 1, 0.0).unwrap(), 256).is_err());
    }

    #[test]
    fn one_hot_volume() {
        let f = Tensor3::from_fn(2, 4, 4, |_, j, c| if c == j % 2 { 1.0 } else { 0.0 }).unwrap();
        let m = build_cost_volume(&f, &f).unwrap();
        for i in 0..2 {
            for j in 0..4 {
                for k in 0..4 {
                    let expect = if j % 2 == k % 2 { 1.0 } else { 0.0 };
                    assert_eq!(m.get(i, j, k), expect);
                }
            }
        }
        let zero = build_cost_volume(&f, &Tensor3::zeros(2, 4, 4)).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
        assert!(build_cost_volume(&f, &Tensor3::zeros(2, 4, 3)).is_err());
    }

    #[test]
    fn pairwise_means() {
        let m0 = Tensor3::new(1, 1, 8, vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0]).unwrap();
        let p = pool_pyramid(&m0).unwrap();
        assert_eq!(p.level(1).data(), &[1.0, 5.0, 9.0, 13.0]);
        assert_eq!(p.level(2).data(), &[3.0, 11.0]);
        assert_eq!(p.level(3).data(), &[7.0]);
        assert!(pool_pyramid(&Tensor3::zeros(1, 1, 12)).is_err());
    }

    #[test]
    fn lookup_channels_and_integer_access() {
        let m0 = Tensor3::from_fn(2, 8, 8, |i, j, k| (i * 64 + j * 8 + k) as f64 * 0.01).unwrap();
        let p = pool_pyramid(&m0).unwrap();
        let d = DisparityMap::from_fn(2, 8, |_, j| Some((j % 3) as f32)).unwrap();
        let ml = lookup(&p, &d, 4).unwrap();
        assert_eq!(ml.channels(), 36);
        for i in 0..2 {
            for j in 3..8 {
                let target = j - j % 3;
                assert_eq!(ml.get(i, j, 4), m0.get(i, j, target));
            }
        }
        assert!(lookup(&p, &d, 0).is_err());
    }

    #[test]
    fn lookup_clamps_at_edges() {
        let m0 = Tensor3::from_fn(1, 8, 8, |_, _, k| k as f64).unwrap();
        let p = pool_pyramid(&m0).unwrap();
        let d = DisparityMap::filled(1, 8, 0.0).unwrap();
        let ml = lookup(&p, &d, 4).unwrap();
        assert_eq!(ml.get(0, 0, 0), 0.0);
        assert_eq!(ml.get(0, 7, 8), 7.0);
    }

    #[test]
    fn reach_is_256_pixels() {
        assert_eq!(search_range_pixels(4), 256.0);
        assert_eq!(lookup_channels(4), 36);
    }
}

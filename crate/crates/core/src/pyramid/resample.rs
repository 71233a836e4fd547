//! Bilinear resampling with edge-clamped sampling.
//!
//! When shrinking, the bilinear (tent) kernel is widened by the scale factor
//! so every source pixel contributes; when enlarging or keeping the size it is
//! the ordinary two-tap bilinear interpolator. Output pixel centres map to
//! `(o + 0.5) * in / out - 0.5` in source coordinates.

use crate::error::{Error, Result};
use crate::raster::Image;

/// Per output index, the source taps and their normalized weights.
pub(crate) fn axis_taps(in_len: usize, out_len: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = in_len as f64 / out_len as f64;
    let support = scale.max(1.0);
    let last = in_len as isize - 1;
    (0..out_len)
        .map(|o| {
            let center = (o as f64 + 0.5) * scale - 0.5;
            let lo = (center - support).floor() as isize;
            let hi = (center + support).ceil() as isize;
            let mut taps: Vec<(usize, f64)> = Vec::new();
            let mut total = 0.0;
            for s in lo..=hi {
                let w = 1.0 - (s as f64 - center).abs() / support;
                if w <= 0.0 {
                    continue;
                }
                let idx = s.clamp(0, last) as usize;
                total += w;
                match taps.iter_mut().find(|(k, _)| *k == idx) {
                    Some(t) => t.1 += w,
                    None => taps.push((idx, w)),
                }
            }
            for t in &mut taps {
                t.1 /= total;
            }
            taps
        })
        .collect()
}

/// Two-tap edge-clamped linear interpolation positions for a real coordinate.
///
/// Returns `(i0, i1, frac)` with the sample equal to
/// `v[i0] * (1 - frac) + v[i1] * frac`; `frac == 0` means `i1` is unused.
#[inline]
pub(crate) fn linear_taps(pos: f64, len: usize) -> (usize, usize, f64) {
    let max = (len - 1) as f64;
    let p = pos.clamp(0.0, max);
    let i0 = p.floor();
    let frac = p - i0;
    let i0 = i0 as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, frac)
}

/// Resizes an interleaved `f32` plane stack of `channels` channels.
fn resize_planes(
    data: &[f32],
    height: usize,
    width: usize,
    channels: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f32> {
    let rows = axis_taps(height, out_h);
    let cols = axis_taps(width, out_w);

    // Horizontal pass first: height x out_w.
    let mut tmp = vec![0.0f64; height * out_w * channels];
    for i in 0..height {
        let src = &data[i * width * channels..(i + 1) * width * channels];
        for (o, taps) in cols.iter().enumerate() {
            for c in 0..channels {
                let mut acc = 0.0;
                for &(s, w) in taps {
                    acc += f64::from(src[s * channels + c]) * w;
                }
                tmp[(i * out_w + o) * channels + c] = acc;
            }
        }
    }

    let mut out = vec![0.0f32; out_h * out_w * channels];
    for (o, taps) in rows.iter().enumerate() {
        for j in 0..out_w {
            for c in 0..channels {
                let mut acc = 0.0;
                for &(s, w) in taps {
                    acc += tmp[(s * out_w + j) * channels + c] * w;
                }
                out[(o * out_w + j) * channels + c] = acc as f32;
            }
        }
    }
    out
}

/// Resizes an image to `out_h` x `out_w`.
///
/// Intensities stay within `[0, 1]`, and the image is returned unchanged when
/// the dimensions already match.
pub fn resize_bilinear(img: &Image, out_h: usize, out_w: usize) -> Result<Image> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidDimensions {
            height: out_h,
            width: out_w,
            reason: "resize target must be at least 1x1",
        });
    }
    if out_h == img.height() && out_w == img.width() {
        return Ok(img.clone());
    }
    let mut data = resize_planes(
        img.data(),
        img.height(),
        img.width(),
        img.channels(),
        out_h,
        out_w,
    );
    for v in &mut data {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(Image::from_raw(out_h, out_w, img.channels(), data))
}

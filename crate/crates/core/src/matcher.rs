//! Local stereo matching: windowed NCC or SAD cost, winner-takes-all over
//! integer disparities, optional parabolic subpixel refinement, and a
//! normalized confidence per pixel.
//!
//! A left-referenced disparity `v` at `(i, j)` pairs the left pixel with the
//! right pixel `(i, j - v)`. Right-referenced matching is computed by running
//! the left-referenced kernel on the flipped pair and mirroring the result.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pyramid::flip_pair;
use crate::raster::{ConfidenceMap, DisparityMap, Image};

/// Windows whose centred sum of squares falls below this are textureless.
const VARIANCE_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    /// Zero-mean normalized cross-correlation; confidence `(ncc + 1) / 2`.
    Ncc,
    /// Sum of absolute differences; confidence `1 - sad / sad_max`.
    Sad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    LeftReference,
    RightReference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    pub window_radius: usize,
    pub max_disparity: usize,
    pub cost_kind: CostKind,
    pub subpixel: bool,
    pub direction: Direction,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            window_radius: 3,
            max_disparity: 64,
            cost_kind: CostKind::Ncc,
            subpixel: true,
            direction: Direction::LeftReference,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_radius < 1 {
            return Err(Error::param("window_radius", "must be at least 1"));
        }
        if self.max_disparity < 1 {
            return Err(Error::param("max_disparity", "must be at least 1"));
        }
        Ok(())
    }

    pub fn with_direction(self, direction: Direction) -> Self {
        Self { direction, ..self }
    }

    /// Parameters for a level downsampled by `scale`: the search range
    /// shrinks to `ceil(max_disparity / scale)`.
    pub fn for_scale(self, scale: f64) -> Self {
        let d = (self.max_disparity as f64 / scale).ceil() as usize;
        Self {
            max_disparity: d.max(1),
            ..self
        }
    }

    pub fn window_side(&self) -> usize {
        2 * self.window_radius + 1
    }
}

/// Matches a rectified pair. RGB inputs are converted to luminance.
pub fn block_match(left: &Image, right: &Image, p: &MatchParams) -> Result<(DisparityMap, ConfidenceMap)> {
    p.validate()?;
    left.ensure_same_size(right)?;
    let (h, w) = (left.height(), left.width());
    if p.max_disparity >= w {
        return Err(Error::param(
            "max_disparity",
            format!("{} must be smaller than the image width {w}", p.max_disparity),
        ));
    }
    if h < p.window_side() || w < p.window_side() {
        return Err(Error::InvalidDimensions {
            height: h,
            width: w,
            reason: "image is smaller than the matching window",
        });
    }
    let (l, r) = (left.to_gray(), right.to_gray());
    match p.direction {
        Direction::LeftReference => Ok(match_left_reference(&l, &r, p)),
        Direction::RightReference => {
            let (fl, fr) = flip_pair(&l, &r)?;
            let (d, c) = match_left_reference(&fl, &fr, p);
            Ok((d.mirror(), c.mirror()))
        }
    }
}

/// Both reference directions of one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BothViews {
    pub left_disparity: DisparityMap,
    pub left_confidence: ConfidenceMap,
    pub right_disparity: DisparityMap,
    pub right_confidence: ConfidenceMap,
}

pub fn match_both_views(left: &Image, right: &Image, p: &MatchParams) -> Result<BothViews> {
    let (left_disparity, left_confidence) =
        block_match(left, right, &p.with_direction(Direction::LeftReference))?;
    let (right_disparity, right_confidence) =
        block_match(left, right, &p.with_direction(Direction::RightReference))?;
    Ok(BothViews {
        left_disparity,
        left_confidence,
        right_disparity,
        right_confidence,
    })
}

/// Sliding window sums of `col` with radius `r`, centred; entries whose
/// window leaves `[0, len)` are left at zero and never read.
fn box_row(col: &[f64], r: usize, out: &mut [f64]) {
    let n = col.len();
    let side = 2 * r + 1;
    if n < side {
        return;
    }
    let mut acc: f64 = col[..side].iter().sum();
    out[r] = acc;
    for c in r + 1..n - r {
        acc += col[c + r] - col[c - r - 1];
        out[c] = acc;
    }
}

struct RowResult {
    disparity: Vec<f32>,
    mask: Vec<bool>,
    confidence: Vec<f32>,
}

fn match_left_reference(left: &Image, right: &Image, p: &MatchParams) -> (DisparityMap, ConfidenceMap) {
    let (h, w) = (left.height(), left.width());
    let r = p.window_radius;
    let rows: Vec<RowResult> = (0..h)
        .into_par_iter()
        .map(|i| {
            if i < r || i + r >= h {
                return RowResult {
                    disparity: vec![DisparityMap::INVALID; w],
                    mask: vec![false; w],
                    confidence: vec![0.0; w],
                };
            }
            match_row(left.data(), right.data(), w, i, p)
        })
        .collect();

    let mut disparity = Vec::with_capacity(h * w);
    let mut mask = Vec::with_capacity(h * w);
    let mut confidence = Vec::with_capacity(h * w);
    for row in rows {
        disparity.extend(row.disparity);
        mask.extend(row.mask);
        confidence.extend(row.confidence);
    }
    (
        DisparityMap::new(h, w, disparity, mask).expect("matcher output is well-formed"),
        ConfidenceMap::new(h, w, confidence).expect("confidence clamped to [0, 1]"),
    )
}

fn match_row(l: &[f32], rt: &[f32], w: usize, i: usize, p: &MatchParams) -> RowResult {
    let r = p.window_radius;
    let n = (p.window_side() * p.window_side()) as f64;
    let maxd = p.max_disparity;
    let rows = i - r..=i + r;
    let px = |img: &[f32], y: usize, x: usize| f64::from(img[y * w + x]);

    // Window sums of intensity and squared intensity for both images.
    let mut col = vec![0.0; w];
    let mut col_sq = vec![0.0; w];
    let mut stats = |img: &[f32]| {
        col.iter_mut().for_each(|v| *v = 0.0);
        col_sq.iter_mut().for_each(|v| *v = 0.0);
        for y in rows.clone() {
            for x in 0..w {
                let v = px(img, y, x);
                col[x] += v;
                col_sq[x] += v * v;
            }
        }
        let mut s = vec![0.0; w];
        let mut ss = vec![0.0; w];
        box_row(&col, r, &mut s);
        box_row(&col_sq, r, &mut ss);
        (s, ss)
    };
    let (sl, sll) = stats(l);
    let (sr, srr) = stats(rt);
    let centred = |s: f64, ss: f64| ss - s * s / n;

    // scores[(d + 1) * w + j] for d in -1..=maxd + 1: higher is better; NEG_INFINITY marks an
    // unusable candidate. The two outer candidates only feed subpixel refinement.
    let at = |d: isize, j: usize| (d + 1) as usize * w + j;
    let mut scores = vec![f64::NEG_INFINITY; (maxd + 3) * w];
    let mut pair_col = vec![0.0; w];
    let mut pair_sum = vec![0.0; w];
    let (lo, hi) = if p.subpixel { (-1, maxd as isize + 1) } else { (0, maxd as isize) };
    for d in lo..=hi {
        let x0 = d.max(0) as usize;
        let x1 = (w as isize).min(w as isize + d) as usize;
        if x0 >= x1 {
            continue;
        }
        pair_col.iter_mut().for_each(|v| *v = 0.0);
        for y in rows.clone() {
            for x in x0..x1 {
                let a = px(l, y, x);
                let b = px(rt, y, (x as isize - d) as usize);
                pair_col[x] += match p.cost_kind {
                    CostKind::Ncc => a * b,
                    CostKind::Sad => (a - b).abs(),
                };
            }
        }
        box_row(&pair_col, r, &mut pair_sum);
        for j in (x0 + r).max(r)..(x1.saturating_sub(r)).min(w - r) {
            let jr = (j as isize - d) as usize;
            let score = match p.cost_kind {
                CostKind::Ncc => {
                    let vl = centred(sl[j], sll[j]);
                    let vr = centred(sr[jr], srr[jr]);
                    if vl <= VARIANCE_EPS || vr <= VARIANCE_EPS {
                        continue;
                    }
                    let cov = pair_sum[j] - sl[j] * sr[jr] / n;
                    (cov / (vl * vr).sqrt()).clamp(-1.0, 1.0)
                }
                CostKind::Sad => -pair_sum[j],
            };
            scores[at(d, j)] = score;
        }
    }

    let mut out = RowResult {
        disparity: vec![DisparityMap::INVALID; w],
        mask: vec![false; w],
        confidence: vec![0.0; w],
    };
    for j in r..w - r {
        let mut best = None::<(usize, f64)>;
        for d in 0..=maxd {
            let s = scores[at(d as isize, j)];
            if s == f64::NEG_INFINITY {
                continue;
            }
            // Strict comparison: ties keep the smaller disparity.
            if best.map_or(true, |(_, b)| s > b) {
                best = Some((d, s));
            }
        }
        let Some((d, s0)) = best else { continue };

        let mut value = d as f64;
        if p.subpixel {
            let sm = scores[at(d as isize - 1, j)];
            let sp = scores[at(d as isize + 1, j)];
            if sm.is_finite() && sp.is_finite() {
                let denom = sm - 2.0 * s0 + sp;
                if denom < 0.0 {
                    value = (value + (0.5 * (sm - sp) / denom).clamp(-0.5, 0.5)).clamp(0.0, maxd as f64);
                }
            }
        }
        let conf = match p.cost_kind {
            CostKind::Ncc => (s0 + 1.0) / 2.0,
            CostKind::Sad => 1.0 + s0 / n,
        };
        out.disparity[j] = value as f32;
        out.mask[j] = true;
        out.confidence[j] = conf.clamp(0.0, 1.0) as f32;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(h, w, |_, _| rng.gen::<f32>()).unwrap()
    }

    /// Pair with constant integer shift: `right(x) = left(x + s)`.
    fn shifted_pair(h: usize, w: usize, s: usize, seed: u64) -> (Image, Image) {
        let wide = noise(h, w + s, seed);
        (
            Image::from_fn(h, w, |i, j| wide.get(i, j, 0)).unwrap(),
            Image::from_fn(h, w, |i, j| wide.get(i, j + s, 0)).unwrap(),
        )
    }

    #[test]
    fn self_match_is_zero_with_full_confidence() {
        let img = noise(20, 30, 1);
        let p = MatchParams {
            max_disparity: 5,
            ..MatchParams::default()
        };
        let (d, c) = block_match(&img, &img, &p).unwrap();
        let (di, _) = block_match(&img, &img, &MatchParams { subpixel: false, ..p }).unwrap();
        assert!(d.valid_count() > 0);
        for i in 0..20 {
            for j in 0..30 {
                if let Some(v) = d.get(i, j) {
                    assert_eq!(di.get(i, j), Some(0.0));
                    assert!((0.0..0.1).contains(&v), "{v}");
                    assert!((c.get(i, j) - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn recovers_integer_shift() {
        let (l, r) = shifted_pair(24, 60, 7, 3);
        let p = MatchParams {
            max_disparity: 12,
            ..MatchParams::default()
        };
        let (d, _) = block_match(&l, &r, &p).unwrap();
        let mut good = 0;
        let mut total = 0;
        for i in 0..24 {
            for j in 7 + 3..60 {
                if let Some(v) = d.get(i, j) {
                    total += 1;
                    if (v - 7.0).abs() <= 0.5 {
                        good += 1;
                    }
                }
            }
        }
        assert!(total > 0 && good == total, "{good}/{total}");
    }

    #[test]
    fn right_reference_scans_rightward() {
        let (l, r) = shifted_pair(24, 60, 5, 9);
        let p = MatchParams {
            max_disparity: 10,
            direction: Direction::RightReference,
            ..MatchParams::default()
        };
        let (d, _) = block_match(&l, &r, &p).unwrap();
        // Right pixel j matches left j + 5, fully visible for j + 5 + 3 < 60.
        for i in 3..21 {
            for j in 3..50 {
                assert_eq!(d.get(i, j).map(|v| (v - 5.0).abs() <= 0.5), Some(true), "({i},{j})");
            }
        }
    }

    #[test]
    fn textureless_is_invalid() {
        let flat = Image::filled(16, 16, 1, 0.4).unwrap();
        let p = MatchParams {
            max_disparity: 3,
            ..MatchParams::default()
        };
        let (d, c) = block_match(&flat, &flat, &p).unwrap();
        assert_eq!(d.valid_count(), 0);
        assert!(c.values().iter().all(|&v| v == 0.0));

        let black = Image::filled(16, 16, 1, 0.0).unwrap();
        let tex = noise(16, 16, 2);
        let (d, _) = block_match(&black, &tex, &p).unwrap();
        assert_eq!(d.valid_count(), 0);
    }

    #[test]
    fn parameter_errors() {
        let img = noise(10, 10, 0);
        let p = MatchParams {
            max_disparity: 10,
            ..MatchParams::default()
        };
        assert!(block_match(&img, &img, &p).is_err());
        let small = noise(5, 20, 0);
        let p = MatchParams {
            max_disparity: 4,
            ..MatchParams::default()
        };
        assert!(block_match(&small, &small, &p).is_err());
        let bad = MatchParams {
            window_radius: 0,
            ..p
        };
        assert!(block_match(&img, &img, &bad).is_err());
        assert!(block_match(&img, &noise(10, 11, 0), &p).is_err());
    }

    #[test]
    fn sad_confidence_and_self_match() {
        let img = noise(16, 24, 5);
        let p = MatchParams {
            max_disparity: 4,
            cost_kind: CostKind::Sad,
            ..MatchParams::default()
        };
        let (d, c) = block_match(&img, &img, &p).unwrap();
        let (di, _) = block_match(&img, &img, &MatchParams { subpixel: false, ..p }).unwrap();
        for i in 0..16 {
            for j in 0..24 {
                if let Some(v) = d.get(i, j) {
                    assert_eq!(di.get(i, j), Some(0.0));
                    assert!((0.0..0.1).contains(&v), "{v}");
                    assert_eq!(c.get(i, j), 1.0);
                }
            }
        }
    }

    #[test]
    fn small_shift_is_refined_at_range_start() {
        let f = |i: usize, x: f64| (0.37 * x).sin() + (0.71 * x + 0.5 * i as f64).cos() + (0.13 * x).sin();
        let l = Image::from_fn(12, 40, |i, j| f(i, j as f64) as f32).unwrap();
        let r = Image::from_fn(12, 40, |i, j| f(i, j as f64 + 0.3) as f32).unwrap();
        let p = MatchParams {
            max_disparity: 4,
            ..MatchParams::default()
        };
        let (d, _) = block_match(&l, &r, &p).unwrap();
        let vals: Vec<f32> = d.values().iter().copied().filter(|v| v.is_finite()).collect();
        let mean = vals.iter().sum::<f32>() / vals.len() as f32;
        assert!((mean - 0.3).abs() < 0.1, "{mean}");
        assert!(vals.iter().all(|v| (0.0..=4.0).contains(v)));
    }

    #[test]
    fn scale_shrinks_search_range() {
        let p = MatchParams {
            max_disparity: 64,
            ..MatchParams::default()
        };
        assert_eq!(p.for_scale(1.0).max_disparity, 64);
        assert_eq!(p.for_scale(3.0).max_disparity, 22);
        assert_eq!(p.for_scale(100.0).max_disparity, 1);
    }
}

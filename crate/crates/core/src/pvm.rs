//! Multi-scale disparity voting.
//!
//! Each pyramid level is matched independently and brought back to the full
//! resolution grid. Per pixel, the population standard deviations of the
//! disparities and of the confidences across levels form a two-component
//! consistency field; a pixel is accepted only if both deviations fall below
//! their thresholds. The accepted full-resolution disparities of the left-
//! and right-referenced paths are finally cross-checked for left-right
//! consistency.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matcher::{block_match, Direction, MatchParams};
use crate::pyramid::{build_dual_pyramids, linear_taps, PyramidLevel, PyramidSpec};
use crate::raster::{ConfidenceMap, DisparityMap, Image};

/// Per-pixel cross-scale deviations and the number of levels valid there.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyField {
    height: usize,
    width: usize,
    disparity_std: Vec<f64>,
    confidence_std: Vec<f64>,
    valid_levels: Vec<usize>,
}

impl ConsistencyField {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(σ_d, σ_c)` at a pixel, or `None` where fewer than two levels are valid.
    pub fn get(&self, i: usize, j: usize) -> Option<(f64, f64)> {
        let idx = i * self.width + j;
        (self.valid_levels[idx] >= 2).then(|| (self.disparity_std[idx], self.confidence_std[idx]))
    }

    pub fn valid_levels(&self, i: usize, j: usize) -> usize {
        self.valid_levels[i * self.width + j]
    }

    /// Builds a field directly from per-pixel entries; `None` is undefined.
    pub fn from_entries(height: usize, width: usize, entries: &[Option<(f64, f64)>]) -> Result<Self> {
        if entries.len() != height * width {
            return Err(Error::BufferLength {
                expected: height * width,
                got: entries.len(),
            });
        }
        let mut field = ConsistencyField {
            height,
            width,
            disparity_std: vec![f64::NAN; entries.len()],
            confidence_std: vec![f64::NAN; entries.len()],
            valid_levels: vec![0; entries.len()],
        };
        for (k, e) in entries.iter().enumerate() {
            if let Some((sd, sc)) = *e {
                if !(sd >= 0.0 && sc >= 0.0) {
                    return Err(Error::OutOfRange(format!("deviations must be >= 0, got ({sd}, {sc})")));
                }
                field.disparity_std[k] = sd;
                field.confidence_std[k] = sc;
                field.valid_levels[k] = 2;
            }
        }
        Ok(field)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VotingThresholds {
    /// Disparity deviation threshold in full-resolution pixels.
    pub kappa1: f64,
    /// Confidence deviation threshold.
    pub kappa2: f64,
}

impl Default for VotingThresholds {
    fn default() -> Self {
        Self {
            kappa1: 1.0,
            kappa2: 0.1,
        }
    }
}

impl VotingThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa1 > 0.0) {
            return Err(Error::param("kappa1", format!("must be positive, got {}", self.kappa1)));
        }
        if !(self.kappa2 > 0.0) {
            return Err(Error::param("kappa2", format!("must be positive, got {}", self.kappa2)));
        }
        Ok(())
    }
}

/// Per-pixel vote count in `{0, 1, 2}`; only 0 is accepted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VotingMap {
    height: usize,
    width: usize,
    votes: Vec<u8>,
}

impl VotingMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn votes(&self) -> &[u8] {
        &self.votes
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.votes[i * self.width + j]
    }

    pub fn accepted_count(&self) -> usize {
        self.votes.iter().filter(|&&v| v == 0).count()
    }

    /// 8-bit rendering: 0/1/2 map to 0/128/255.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.votes
            .iter()
            .map(|&v| match v {
                0 => 0,
                1 => 128,
                _ => 255,
            })
            .collect()
    }
}

/// Upsamples a level's disparity and confidence to `full_h` x `full_w`,
/// scaling disparities by `full_w / level_width`.
///
/// A pixel is valid only if every bilinear source tap with non-zero weight is
/// valid.
pub fn align_to_full_res(
    d: &DisparityMap,
    c: &ConfidenceMap,
    full_h: usize,
    full_w: usize,
) -> Result<(DisparityMap, ConfidenceMap)> {
    if d.height() != c.height() || d.width() != c.width() {
        return Err(Error::DimensionMismatch {
            left_h: d.height(),
            left_w: d.width(),
            right_h: c.height(),
            right_w: c.width(),
        });
    }
    if full_h < d.height() || full_w < d.width() {
        return Err(Error::param("scale", "alignment target must not be smaller than the level"));
    }
    if full_h == d.height() && full_w == d.width() {
        return Ok((d.clone(), c.clone()));
    }
    let (h, w) = (d.height(), d.width());
    let scale = full_w as f64 / w as f64;
    let sy = h as f64 / full_h as f64;
    let sx = w as f64 / full_w as f64;

    let mut values = vec![DisparityMap::INVALID; full_h * full_w];
    let mut mask = vec![false; full_h * full_w];
    let mut conf = vec![0.0f32; full_h * full_w];
    for i in 0..full_h {
        let (y0, y1, fy) = linear_taps((i as f64 + 0.5) * sy - 0.5, h);
        for j in 0..full_w {
            let (x0, x1, fx) = linear_taps((j as f64 + 0.5) * sx - 0.5, w);
            let taps = [
                (y0, x0, (1.0 - fy) * (1.0 - fx)),
                (y0, x1, (1.0 - fy) * fx),
                (y1, x0, fy * (1.0 - fx)),
                (y1, x1, fy * fx),
            ];
            let mut dv = 0.0;
            let mut cv = 0.0;
            let mut ok = true;
            for &(y, x, wgt) in &taps {
                if wgt == 0.0 {
                    continue;
                }
                match d.get(y, x) {
                    Some(v) => {
                        dv += f64::from(v) * wgt;
                        cv += f64::from(c.get(y, x)) * wgt;
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                let k = i * full_w + j;
                values[k] = (dv * scale) as f32;
                mask[k] = true;
                conf[k] = (cv as f32).clamp(0.0, 1.0);
            }
        }
    }
    Ok((
        DisparityMap::new(full_h, full_w, values, mask)?,
        ConfidenceMap::new(full_h, full_w, conf)?,
    ))
}

fn population_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Population standard deviations across the levels valid at each pixel.
pub fn consistency_stats(levels: &[(DisparityMap, ConfidenceMap)]) -> Result<ConsistencyField> {
    if levels.len() < 2 {
        return Err(Error::param("levels", format!("need at least 2, got {}", levels.len())));
    }
    let (h, w) = (levels[0].0.height(), levels[0].0.width());
    for (d, c) in levels {
        if d.height() != h || d.width() != w || c.height() != h || c.width() != w {
            return Err(Error::DimensionMismatch {
                left_h: h,
                left_w: w,
                right_h: d.height(),
                right_w: d.width(),
            });
        }
    }
    let n = h * w;
    let mut field = ConsistencyField {
        height: h,
        width: w,
        disparity_std: vec![f64::NAN; n],
        confidence_std: vec![f64::NAN; n],
        valid_levels: vec![0; n],
    };
    let mut ds = Vec::with_capacity(levels.len());
    let mut cs = Vec::with_capacity(levels.len());
    for k in 0..n {
        ds.clear();
        cs.clear();
        for (d, c) in levels {
            if d.mask()[k] {
                ds.push(f64::from(d.values()[k]));
                cs.push(f64::from(c.values()[k]));
            }
        }
        field.valid_levels[k] = ds.len();
        if ds.len() >= 2 {
            field.disparity_std[k] = population_std(&ds);
            field.confidence_std[k] = population_std(&cs);
        }
    }
    Ok(field)
}

#[inline]
fn step(x: f64, threshold: f64) -> u8 {
    u8::from(x >= threshold)
}

/// Votes per pixel; undefined statistics vote 2.
pub fn vote(field: &ConsistencyField, t: &VotingThresholds) -> VotingMap {
    let votes = (0..field.height * field.width)
        .map(|k| {
            if field.valid_levels[k] < 2 {
                2
            } else {
                step(field.disparity_std[k], t.kappa1) + step(field.confidence_std[k], t.kappa2)
            }
        })
        .collect();
    VotingMap {
        height: field.height,
        width: field.width,
        votes,
    }
}

/// Full-resolution (first level) disparities at accepted pixels.
pub fn select_semidense(levels: &[(DisparityMap, ConfidenceMap)], votes: &VotingMap) -> Result<DisparityMap> {
    let Some((base, _)) = levels.first() else {
        return Err(Error::Empty("no levels to select from"));
    };
    if base.height() != votes.height || base.width() != votes.width {
        return Err(Error::DimensionMismatch {
            left_h: base.height(),
            left_w: base.width(),
            right_h: votes.height,
            right_w: votes.width,
        });
    }
    let mask: Vec<bool> = base
        .mask()
        .iter()
        .zip(&votes.votes)
        .map(|(&ok, &v)| ok && v == 0)
        .collect();
    DisparityMap::new(base.height(), base.width(), base.values().to_vec(), mask)
}

/// Keeps a left pixel `p = (i, j)` iff the right-referenced map, linearly
/// interpolated at `(i, j - d_left(p))`, is valid and within `tol`.
pub fn lrdcc(d_left: &DisparityMap, d_right: &DisparityMap, tol: f64) -> Result<DisparityMap> {
    d_left.ensure_same_size(d_right)?;
    if !(tol >= 0.0) {
        return Err(Error::param("tol", format!("must be non-negative, got {tol}")));
    }
    let w = d_left.width();
    DisparityMap::from_fn(d_left.height(), w, |i, j| {
        let dl = f64::from(d_left.get(i, j)?);
        let x = j as f64 - dl;
        if x < 0.0 || x > (w - 1) as f64 {
            return None;
        }
        let (x0, x1, fx) = linear_taps(x, w);
        let r0 = f64::from(d_right.get(i, x0)?);
        let dr = if fx > 0.0 {
            r0 * (1.0 - fx) + f64::from(d_right.get(i, x1)?) * fx
        } else {
            r0
        };
        ((dl - dr).abs() <= tol).then_some(dl as f32)
    })
}

/// Complete configuration of the voting pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvmConfig {
    pub pyramid: PyramidSpec,
    pub matching: MatchParams,
    pub thresholds: VotingThresholds,
    pub lrdcc_tolerance: f64,
}

impl Default for PvmConfig {
    fn default() -> Self {
        Self {
            pyramid: PyramidSpec::default(),
            matching: MatchParams::default(),
            thresholds: VotingThresholds::default(),
            lrdcc_tolerance: 1.0,
        }
    }
}

impl PvmConfig {
    pub fn validate(&self) -> Result<()> {
        self.pyramid.validate()?;
        self.matching.validate()?;
        self.thresholds.validate()?;
        if !(self.lrdcc_tolerance >= 0.0) {
            return Err(Error::param("lrdcc_tolerance", "must be non-negative"));
        }
        Ok(())
    }
}

/// One reference direction after voting.
#[derive(Debug, Clone, PartialEq)]
pub struct SideResult {
    /// Aligned per-level `(disparity, confidence)`, first level at full resolution.
    pub levels: Vec<(DisparityMap, ConfidenceMap)>,
    pub field: ConsistencyField,
    pub votes: VotingMap,
    pub semidense: DisparityMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvmOutput {
    /// Left-referenced labels after the left-right check.
    pub labels: DisparityMap,
    pub left: SideResult,
    pub right: SideResult,
}

impl PvmOutput {
    /// Voting map of the left-referenced path.
    pub fn votes(&self) -> &VotingMap {
        &self.left.votes
    }
}

fn match_level(
    level: &PyramidLevel,
    full_h: usize,
    full_w: usize,
    p: &MatchParams,
    direction: Direction,
) -> Result<(DisparityMap, ConfidenceMap)> {
    let lw = level.left.width();
    let lh = level.left.height();
    let mut params = p.for_scale(level.horizontal_scale(full_w)).with_direction(direction);
    params.max_disparity = params.max_disparity.min(lw.saturating_sub(1));
    if params.max_disparity < 1 || lh < params.window_side() || lw < params.window_side() {
        // Level too small to match: contributes nothing.
        return Ok((
            DisparityMap::invalid(full_h, full_w),
            ConfidenceMap::filled(full_h, full_w, 0.0)?,
        ));
    }
    let (d, c) = block_match(&level.left, &level.right, &params)?;
    align_to_full_res(&d, &c, full_h, full_w)
}

fn run_side(
    group: &[PyramidLevel],
    full_h: usize,
    full_w: usize,
    cfg: &PvmConfig,
    direction: Direction,
) -> Result<SideResult> {
    let levels = group
        .par_iter()
        .map(|level| match_level(level, full_h, full_w, &cfg.matching, direction))
        .collect::<Result<Vec<_>>>()?;
    let field = consistency_stats(&levels)?;
    let votes = vote(&field, &cfg.thresholds);
    let semidense = select_semidense(&levels, &votes)?;
    Ok(SideResult {
        levels,
        field,
        votes,
        semidense,
    })
}

/// Produces left-referenced semi-dense labels for a rectified pair.
pub fn pvm_pipeline(left: &Image, right: &Image, cfg: &PvmConfig) -> Result<PvmOutput> {
    cfg.validate()?;
    left.ensure_same_size(right)?;
    if cfg.matching.max_disparity >= left.width() {
        return Err(Error::param(
            "max_disparity",
            format!(
                "{} must be smaller than the image width {}",
                cfg.matching.max_disparity,
                left.width()
            ),
        ));
    }
    let pyramids = build_dual_pyramids(left, right, &cfg.pyramid)?;
    let (h, w) = (left.height(), left.width());
    let (l, r) = rayon::join(
        || run_side(&pyramids.left_group, h, w, cfg, Direction::LeftReference),
        || run_side(&pyramids.right_group, h, w, cfg, Direction::RightReference),
    );
    let (l, r) = (l?, r?);
    let labels = lrdcc(&l.semidense, &r.semidense, cfg.lrdcc_tolerance)?;
    Ok(PvmOutput {
        labels,
        left: l,
        right: r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(d: DisparityMap, c: f32) -> (DisparityMap, ConfidenceMap) {
        let (h, w) = (d.height(), d.width());
        (d, ConfidenceMap::filled(h, w, c).unwrap())
    }

    #[test]
    fn align_identity_and_constant_scaling() {
        let d = DisparityMap::from_fn(4, 6, |i, j| Some((i + j) as f32)).unwrap();
        let c = ConfidenceMap::filled(4, 6, 0.7).unwrap();
        let (d1, c1) = align_to_full_res(&d, &c, 4, 6).unwrap();
        assert_eq!((d1, c1), (d.clone(), c.clone()));

        let k = DisparityMap::filled(5, 5, 3.0).unwrap();
        let (d2, c2) = align_to_full_res(&k, &ConfidenceMap::filled(5, 5, 0.5).unwrap(), 10, 10).unwrap();
        assert_eq!(d2.valid_count(), 100);
        assert!(d2.values().iter().all(|&v| (v - 6.0).abs() < 1e-6));
        assert!(c2.values().iter().all(|&v| (v - 0.5).abs() < 1e-6));
    }

    #[test]
    fn align_requires_all_taps_valid() {
        let d = DisparityMap::from_fn(4, 4, |i, j| (i != 1 || j != 1).then_some(2.0)).unwrap();
        let c = ConfidenceMap::filled(4, 4, 1.0).unwrap();
        let (a, _) = align_to_full_res(&d, &c, 8, 8).unwrap();
        // Output pixels whose taps touch (1, 1) are invalid; far corners stay valid.
        assert!(!a.is_valid(2, 2) && !a.is_valid(3, 3) && !a.is_valid(1, 1));
        assert!(a.is_valid(7, 7) && a.is_valid(0, 7));
    }

    #[test]
    fn stats_identical_levels_zero() {
        let d = DisparityMap::from_fn(3, 3, |i, j| Some((i * j) as f32)).unwrap();
        let levels = vec![pair(d.clone(), 0.8), pair(d.clone(), 0.8), pair(d, 0.8)];
        let f = consistency_stats(&levels).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(f.get(i, j), Some((0.0, 0.0)));
            }
        }
    }

    #[test]
    fn stats_population_std_of_two() {
        let levels = vec![
            pair(DisparityMap::filled(1, 1, 4.0).unwrap(), 0.2),
            pair(DisparityMap::filled(1, 1, 6.0).unwrap(), 0.6),
        ];
        let f = consistency_stats(&levels).unwrap();
        let (sd, sc) = f.get(0, 0).unwrap();
        assert!((sd - 1.0).abs() < 1e-12);
        assert!((sc - 0.2).abs() < 1e-7);
        assert!(consistency_stats(&levels[..1]).is_err());
    }

    #[test]
    fn stats_skip_invalid_levels() {
        let levels = vec![
            pair(DisparityMap::filled(1, 1, 4.0).unwrap(), 0.5),
            pair(DisparityMap::invalid(1, 1), 0.0),
            pair(DisparityMap::filled(1, 1, 4.0).unwrap(), 0.5),
        ];
        let f = consistency_stats(&levels).unwrap();
        assert_eq!(f.valid_levels(0, 0), 2);
        assert_eq!(f.get(0, 0), Some((0.0, 0.0)));

        let single = vec![
            pair(DisparityMap::filled(1, 1, 4.0).unwrap(), 0.5),
            pair(DisparityMap::invalid(1, 1), 0.0),
        ];
        assert_eq!(consistency_stats(&single).unwrap().get(0, 0), None);
    }

    #[test]
    fn vote_boundaries() {
        let t = VotingThresholds {
            kappa1: 1.0,
            kappa2: 0.1,
        };
        let field = ConsistencyField::from_entries(
            1,
            4,
            &[Some((0.0, 0.0)), Some((1.0, 0.0)), Some((1.0, 0.1)), None],
        )
        .unwrap();
        assert_eq!(vote(&field, &t).votes(), &[0, 1, 2, 2]);
    }

    #[test]
    fn select_by_votes() {
        let d = DisparityMap::filled(2, 2, 5.0).unwrap();
        let levels = vec![pair(d.clone(), 1.0), pair(d, 1.0)];
        let f = consistency_stats(&levels).unwrap();
        let all = select_semidense(&levels, &vote(&f, &VotingThresholds::default())).unwrap();
        assert_eq!(all.valid_count(), 4);
        assert!(all.values().iter().all(|&v| v == 5.0));

        let reject = VotingMap {
            height: 2,
            width: 2,
            votes: vec![2; 4],
        };
        assert_eq!(select_semidense(&levels, &reject).unwrap().valid_count(), 0);
    }

    #[test]
    fn lrdcc_cases() {
        let z = DisparityMap::filled(3, 8, 0.0).unwrap();
        assert_eq!(lrdcc(&z, &z, 1.0).unwrap().valid_count(), 24);

        let l = DisparityMap::filled(3, 8, 5.0).unwrap();
        let r = DisparityMap::filled(3, 8, 9.0).unwrap();
        assert_eq!(lrdcc(&l, &r, 1.0).unwrap().valid_count(), 0);

        // Consistent constant shift: pixels whose match leaves the image drop.
        let l = DisparityMap::filled(1, 8, 2.0).unwrap();
        let r = DisparityMap::filled(1, 8, 2.0).unwrap();
        let out = lrdcc(&l, &r, 1.0).unwrap();
        assert_eq!(out.mask(), &[false, false, true, true, true, true, true, true]);
    }

    #[test]
    fn lrdcc_interpolates_fractional_targets() {
        let l = DisparityMap::filled(1, 6, 1.5).unwrap();
        let r = DisparityMap::from_fn(1, 6, |_, j| (j != 2).then_some(1.5)).unwrap();
        let out = lrdcc(&l, &r, 0.1).unwrap();
        // j = 3 and 4 sample x = 1.5 and 2.5, which straddle the invalid x = 2.
        assert_eq!(out.mask(), &[false, false, true, false, false, true]);
    }
}

//! Random-dot stereograms with exactly known disparity.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pyramid::io::{decode_gray8, encode_gray8, encode_image_png, load_disparity, load_image};
use crate::pyramid::{save_disparity, DisparityFormat};
use crate::raster::{DisparityMap, Image};

/// Left-referenced ground-truth disparity field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShiftField {
    Constant(f64),
    /// Background plane with a fronto-parallel square in front of it.
    TwoPlane {
        background: f64,
        foreground: f64,
        top: usize,
        left: usize,
        size: usize,
    },
    /// Disparity varying linearly from `from` (column 0) to `to` (last column).
    Ramp { from: f64, to: f64 },
}

impl ShiftField {
    /// Two-plane field with a centred square of half the smaller image side.
    pub fn two_plane_centered(background: f64, foreground: f64, h: usize, w: usize) -> Self {
        let size = h.min(w) / 2;
        ShiftField::TwoPlane {
            background,
            foreground,
            top: (h - size) / 2,
            left: (w - size) / 2,
            size,
        }
    }

    pub fn at(&self, i: usize, j: usize, w: usize) -> f64 {
        match *self {
            ShiftField::Constant(s) => s,
            ShiftField::TwoPlane {
                background,
                foreground,
                top,
                left,
                size,
            } => {
                if (top..top + size).contains(&i) && (left..left + size).contains(&j) {
                    foreground
                } else {
                    background
                }
            }
            ShiftField::Ramp { from, to } => {
                if w < 2 {
                    from
                } else {
                    from + (to - from) * j as f64 / (w - 1) as f64
                }
            }
        }
    }

    pub fn extremes(&self) -> (f64, f64) {
        match *self {
            ShiftField::Constant(s) => (s, s),
            ShiftField::TwoPlane {
                background,
                foreground,
                ..
            } => (background.min(foreground), background.max(foreground)),
            ShiftField::Ramp { from, to } => (from.min(to), from.max(to)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub left: Image,
    pub right: Image,
    /// Dense left-referenced disparity.
    pub truth: DisparityMap,
    /// Left pixels without a visible correspondence in the right view
    /// (hidden behind a nearer surface or outside the frame).
    pub occlusion: Vec<bool>,
}

/// Default fraction of bright dots.
pub const DEFAULT_DOT_DENSITY: f64 = 0.5;

fn random_dots(h: usize, w: usize, density: f64, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let raw: Vec<f32> = (0..h * w)
        .map(|_| if rng.gen_bool(density) { 1.0 } else { 0.0 })
        .collect();
    // One 3x3 box pass, edge-clamped.
    let mut out = vec![0.0f32; h * w];
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0f32;
            for di in -1isize..=1 {
                for dj in -1isize..=1 {
                    let y = (i as isize + di).clamp(0, h as isize - 1) as usize;
                    let x = (j as isize + dj).clamp(0, w as isize - 1) as usize;
                    acc += raw[y * w + x];
                }
            }
            out[i * w + j] = acc / 9.0;
        }
    }
    out
}

/// Generates a random-dot scene for the given disparity field.
///
/// Each right row is produced by inverse warping: the left row is treated as
/// a piecewise-linear curve mapped by `x = j - d(j)`, every right pixel takes
/// the nearest surface (largest disparity) covering it, and depth
/// discontinuities are never bridged. Right pixels no surface covers receive
/// independent dots.
pub fn make_rds(h: usize, w: usize, field: ShiftField, density: f64, seed: u64) -> Result<SyntheticScene> {
    if h == 0 || w < 2 {
        return Err(Error::InvalidDimensions {
            height: h,
            width: w,
            reason: "scene needs at least one row and two columns",
        });
    }
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::param("density", format!("must lie in [0, 1], got {density}")));
    }
    let (lo, hi) = field.extremes();
    if lo < 0.0 || !(hi < w as f64 / 4.0) {
        return Err(Error::param(
            "shift_field",
            format!("shifts must lie in [0, {}), got [{lo}, {hi}]", w as f64 / 4.0),
        ));
    }
    if let ShiftField::Ramp { from, to } = field {
        if w > 1 && ((to - from) / (w - 1) as f64).abs() >= 1.0 {
            return Err(Error::param("shift_field", "ramp slope must stay below 1"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let left = random_dots(h, w, density, &mut rng);
    let fill = random_dots(h, w, density, &mut rng);

    let truth: Vec<f64> = (0..h)
        .flat_map(|i| (0..w).map(move |j| (i, j)))
        .map(|(i, j)| field.at(i, j, w))
        .collect();

    let mut right = vec![0.0f32; h * w];
    let mut occlusion = vec![false; h * w];
    for i in 0..h {
        let row = &left[i * w..(i + 1) * w];
        let t = &truth[i * w..(i + 1) * w];
        let mut zbuf = vec![f64::NEG_INFINITY; w];
        let mut val = vec![0.0f32; w];
        let mut splat = |x: usize, disp: f64, v: f32| {
            if disp > zbuf[x] {
                zbuf[x] = disp;
                val[x] = v;
            }
        };
        for j in 0..w {
            let m0 = j as f64 - t[j];
            if m0.fract() == 0.0 && (0.0..w as f64).contains(&m0) {
                splat(m0 as usize, t[j], row[j]);
            }
            if j + 1 == w || (t[j + 1] - t[j]).abs() > 1.0 {
                continue;
            }
            let m1 = (j + 1) as f64 - t[j + 1];
            let (a, b) = (m0.min(m1), m0.max(m1));
            let first = a.ceil().max(0.0) as isize;
            let last = b.floor().min((w - 1) as f64) as isize;
            for x in first..=last {
                let s = (x as f64 - m0) / (m1 - m0);
                let v = f64::from(row[j]) * (1.0 - s) + f64::from(row[j + 1]) * s;
                let disp = t[j] * (1.0 - s) + t[j + 1] * s;
                splat(x as usize, disp, v as f32);
            }
        }
        for x in 0..w {
            right[i * w + x] = if zbuf[x].is_finite() { val[x] } else { fill[i * w + x] };
        }
        for j in 0..w {
            let x = j as f64 - t[j];
            occlusion[i * w + j] = if x < 0.0 || x > (w - 1) as f64 {
                true
            } else {
                let z = zbuf[x.floor() as usize].max(zbuf[x.ceil() as usize]);
                z > t[j] + 0.5
            };
        }
    }

    Ok(SyntheticScene {
        left: Image::gray(h, w, left)?,
        right: Image::gray(h, w, right)?,
        truth: DisparityMap::dense(h, w, truth.iter().map(|&v| v as f32).collect())?,
        occlusion,
    })
}

/// Writes `left.png`, `right.png` (16-bit), `truth.pfm`, and `occlusion.png`.
pub fn save_scene(scene: &SyntheticScene, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, bytes: Vec<u8>| {
        let p = dir.join(name);
        std::fs::write(&p, bytes).map_err(|e| Error::io(p, e))
    };
    write("left.png", encode_image_png(&scene.left, 16)?)?;
    write("right.png", encode_image_png(&scene.right, 16)?)?;
    save_disparity(&scene.truth, dir.join("truth.pfm"), DisparityFormat::Pfm)?;
    let occ: Vec<u8> = scene.occlusion.iter().map(|&o| if o { 255 } else { 0 }).collect();
    write(
        "occlusion.png",
        encode_gray8(&occ, scene.truth.height(), scene.truth.width())?,
    )
}

pub fn load_scene(dir: impl AsRef<Path>) -> Result<SyntheticScene> {
    let dir = dir.as_ref();
    let left = load_image(dir.join("left.png"))?;
    let right = load_image(dir.join("right.png"))?;
    let truth = load_disparity(dir.join("truth.pfm"))?;
    let occ_path = dir.join("occlusion.png");
    let bytes = std::fs::read(&occ_path).map_err(|e| Error::io(&occ_path, e))?;
    let (occ, _, _) = decode_gray8(&bytes)?;
    Ok(SyntheticScene {
        left,
        right,
        truth,
        occlusion: occ.into_iter().map(|v| v > 127).collect(),
    })
}

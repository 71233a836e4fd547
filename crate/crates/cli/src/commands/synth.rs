use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stereolabel::harness::{make_rds, ShiftField, SyntheticScene, DEFAULT_DOT_DENSITY};
use stereolabel::pyramid::io::{encode_gray8, encode_image_png, encode_pfm};

use crate::fsutil::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SceneKind {
    Constant,
    TwoPlane,
    Ramp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Layout {
    /// One directory per scene with left.png, right.png, truth.pfm, occlusion.png.
    Scenes,
    /// `left/`, `right/`, `truth/`, `occlusion/` directories ready for `label`.
    Dataset,
}

#[derive(Debug, Clone, clap::Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "constant")]
    pub kind: SceneKind,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    /// Largest disparity drawn, also capped below a quarter of the width.
    #[arg(long, default_value_t = 32.0)]
    pub max_shift: f64,
    #[arg(long, value_enum, default_value = "dataset")]
    pub layout: Layout,
    #[arg(long)]
    pub out: PathBuf,
}

/// Field for scene `index`, drawn from `seed + index`.
pub fn scene_field(kind: SceneKind, seed: u64, index: usize, h: usize, w: usize, max_shift: f64) -> ShiftField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
    let cap = max_shift.min(w as f64 / 4.0 - 0.5).max(1.0);
    let lo = (cap / 8.0).min(2.0);
    match kind {
        SceneKind::Constant => ShiftField::Constant(rng.gen_range(lo..=cap)),
        SceneKind::TwoPlane => {
            let background = rng.gen_range(lo..=cap / 2.0);
            let foreground = rng.gen_range((background + cap / 4.0).min(cap)..=cap);
            ShiftField::two_plane_centered(background, foreground, h, w)
        }
        SceneKind::Ramp => {
            let a = rng.gen_range(lo..=cap);
            let b = rng.gen_range(lo..=cap);
            ShiftField::Ramp { from: a, to: b }
        }
    }
}

fn write_scene(scene: &SyntheticScene, layout: Layout, out: &Path, name: &str) -> Result<()> {
    let (h, w) = (scene.truth.height(), scene.truth.width());
    let occ: Vec<u8> = scene.occlusion.iter().map(|&o| if o { 255 } else { 0 }).collect();
    let files = [
        ("left", "png", encode_image_png(&scene.left, 16)?),
        ("right", "png", encode_image_png(&scene.right, 16)?),
        ("truth", "pfm", encode_pfm(&scene.truth)),
        ("occlusion", "png", encode_gray8(&occ, h, w)?),
    ];
    for (part, ext, bytes) in files {
        let path = match layout {
            Layout::Scenes => out.join(name).join(format!("{part}.{ext}")),
            Layout::Dataset => out.join(part).join(format!("{name}.{ext}")),
        };
        write_atomic(&path, &bytes)?;
    }
    Ok(())
}

pub fn run(args: &SynthArgs) -> Result<Vec<String>> {
    if args.count == 0 {
        bail!("count must be at least 1");
    }
    let mut names = Vec::with_capacity(args.count);
    for index in 0..args.count {
        let field = scene_field(args.kind, args.seed, index, args.height, args.width, args.max_shift);
        let scene = make_rds(
            args.height,
            args.width,
            field,
            DEFAULT_DOT_DENSITY,
            args.seed.wrapping_add(index as u64),
        )?;
        let name = match args.layout {
            Layout::Scenes => format!("scene_{index:04}"),
            Layout::Dataset => format!("{index:04}"),
        };
        write_scene(&scene, args.layout, &args.out, &name)?;
        names.push(name);
    }
    Ok(names)
}

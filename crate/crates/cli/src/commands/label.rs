use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use stereolabel::harness::density;
use stereolabel::pyramid::colorize_disparity;
use stereolabel::pyramid::io::{encode_gray8, encode_image_png, encode_pfm, encode_png16, load_image};
use stereolabel::pvm_pipeline;

use crate::config::{Overrides, RunConfig};
use crate::fsutil::{list_files, stem, write_atomic};

#[derive(Debug, Clone, clap::Args)]
pub struct LabelArgs {
    /// Dataset root holding `left/` and `right/` PNGs with matching names.
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRow {
    pub name: String,
    pub height: usize,
    pub width: usize,
    pub labelled: usize,
    pub density_percent: f64,
    pub status: String,
}

#[derive(Debug, Clone)]
pub struct Pair {
    pub name: String,
    pub left: Option<PathBuf>,
    pub right: Option<PathBuf>,
}

/// Pairs by file stem across `left/` and `right/`; one-sided entries are kept
/// so they can be reported.
pub fn discover_pairs(root: &Path) -> Result<Vec<Pair>> {
    let side = |name: &str| -> Result<Vec<PathBuf>> {
        let dir = root.join(name);
        if dir.is_dir() {
            list_files(&dir, &["png"])
        } else {
            Ok(Vec::new())
        }
    };
    let (left, right) = (side("left")?, side("right")?);
    let names: BTreeSet<String> = left.iter().chain(&right).map(|p| stem(p)).collect();
    let find = |files: &[PathBuf], n: &str| files.iter().find(|p| stem(p) == n).cloned();
    Ok(names
        .into_iter()
        .map(|name| Pair {
            left: find(&left, &name),
            right: find(&right, &name),
            name,
        })
        .collect())
}

fn label_pair(pair: &Pair, cfg: &RunConfig, out: &Path) -> Result<PairRow> {
    let left = pair.left.as_ref().ok_or_else(|| anyhow!("missing left image"))?;
    let right = pair.right.as_ref().ok_or_else(|| anyhow!("missing right image"))?;
    let l = load_image(left)?;
    let r = load_image(right)?;
    let result = pvm_pipeline(&l, &r, &cfg.pvm())?;
    let labels = &result.labels;
    let (h, w) = (labels.height(), labels.width());
    write_atomic(&out.join(format!("{}.pfm", pair.name)), &encode_pfm(labels))?;
    write_atomic(&out.join(format!("{}.png", pair.name)), &encode_png16(labels)?)?;
    write_atomic(
        &out.join(format!("{}_votes.png", pair.name)),
        &encode_gray8(&result.votes().to_gray8(), h, w)?,
    )?;
    let preview = colorize_disparity(labels, cfg.max_disparity.max(1) as f32)?;
    write_atomic(&out.join(format!("{}_preview.png", pair.name)), &encode_image_png(&preview, 8)?)?;
    Ok(PairRow {
        name: pair.name.clone(),
        height: h,
        width: w,
        labelled: labels.valid_count(),
        density_percent: density(labels),
        status: "ok".into(),
    })
}

pub fn summary_csv(rows: &[PairRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner()?)
}

/// Labels every pair, writes `summary.csv` and `config.toml`, and fails if any
/// pair failed.
pub fn run(args: &LabelArgs) -> Result<Vec<PairRow>> {
    let cfg = RunConfig::resolve(&args.overrides)?;
    let pairs = discover_pairs(&args.dataset)?;
    if pairs.is_empty() {
        bail!("no pairs found under {}", args.dataset.display());
    }
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_atomic(&args.out.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    let rows: Vec<PairRow> = cfg.pool()?.install(|| {
        pairs
            .par_iter()
            .map(|p| {
                label_pair(p, &cfg, &args.out).unwrap_or_else(|e| PairRow {
                    name: p.name.clone(),
                    height: 0,
                    width: 0,
                    labelled: 0,
                    density_percent: 0.0,
                    status: format!("error: {e:#}"),
                })
            })
            .collect()
    });
    write_atomic(&args.out.join("summary.csv"), &summary_csv(&rows)?)?;
    let failed: Vec<&PairRow> = rows.iter().filter(|r| r.status != "ok").collect();
    for r in &failed {
        eprintln!("{}: {}", r.name, r.status);
    }
    if !failed.is_empty() {
        bail!("{} of {} pairs failed", failed.len(), rows.len());
    }
    Ok(rows)
}

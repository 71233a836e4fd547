use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Result};
use serde::Serialize;
use stereolabel::harness::ErrorTally;
use stereolabel::pyramid::load_disparity;

use crate::fsutil::{list_files, stem, write_atomic};

#[derive(Debug, Clone, clap::Args)]
pub struct EvalArgs {
    /// Directory of predicted maps (`.pfm` preferred over `.png` per name).
    pub pred: PathBuf,
    /// Directory of ground-truth maps.
    pub truth: PathBuf,
    /// Also write the table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub name: String,
    pub covalid: usize,
    pub aepe: Option<f64>,
    pub f1_percent: Option<f64>,
    pub density_percent: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    /// Pooled over every co-valid pixel of every successful pair.
    pub aggregate: EvalRow,
}

fn find_pred(dir: &Path, name: &str) -> Option<PathBuf> {
    ["pfm", "png"]
        .iter()
        .map(|ext| dir.join(format!("{name}.{ext}")))
        .find(|p| p.is_file())
}

fn row(name: String, tally: &ErrorTally, valid: usize, pixels: usize, status: &str) -> EvalRow {
    EvalRow {
        name,
        covalid: tally.count,
        aepe: tally.aepe().ok(),
        f1_percent: tally.f1_percent().ok(),
        density_percent: if pixels == 0 {
            0.0
        } else {
            100.0 * valid as f64 / pixels as f64
        },
        status: status.into(),
    }
}

pub fn evaluate(pred_dir: &Path, truth_dir: &Path) -> Result<EvalReport> {
    let truths = list_files(truth_dir, &["pfm", "png"])?;
    if truths.is_empty() {
        bail!("no ground-truth maps found under {}", truth_dir.display());
    }
    let mut rows = Vec::new();
    let mut total = ErrorTally::default();
    let (mut valid, mut pixels) = (0usize, 0usize);
    for t in truths {
        let name = stem(&t);
        let one = || -> Result<(ErrorTally, usize, usize)> {
            let p = find_pred(pred_dir, &name).ok_or_else(|| anyhow!("no prediction"))?;
            let pred = load_disparity(&p)?;
            let truth = load_disparity(&t)?;
            Ok((ErrorTally::from_maps(&pred, &truth)?, pred.valid_count(), pred.len()))
        };
        match one() {
            Ok((tally, v, n)) => {
                total.merge(&tally);
                valid += v;
                pixels += n;
                rows.push(row(name, &tally, v, n, "ok"));
            }
            Err(e) => rows.push(row(name, &ErrorTally::default(), 0, 0, &format!("error: {e:#}"))),
        }
    }
    let aggregate = row("ALL".into(), &total, valid, pixels, "ok");
    Ok(EvalReport { rows, aggregate })
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

pub fn run(args: &EvalArgs) -> Result<EvalReport> {
    let report = evaluate(&args.pred, &args.truth)?;
    println!("{:<24} {:>10} {:>10} {:>10} {:>10}  status", "name", "pixels", "aepe_px", "f1_pct", "density");
    for r in report.rows.iter().chain(std::iter::once(&report.aggregate)) {
        println!(
            "{:<24} {:>10} {:>10} {:>10} {:>10.2}  {}",
            r.name,
            r.covalid,
            fmt(r.aepe),
            fmt(r.f1_percent),
            r.density_percent,
            r.status
        );
    }
    if let Some(path) = &args.csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in report.rows.iter().chain(std::iter::once(&report.aggregate)) {
            w.serialize(r)?;
        }
        write_atomic(path, &w.into_inner()?)?;
    }
    let failed = report.rows.iter().filter(|r| r.status != "ok").count();
    if failed > 0 {
        bail!("{failed} of {} pairs failed", report.rows.len());
    }
    Ok(report)
}

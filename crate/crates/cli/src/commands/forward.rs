use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use stereolabel::losses::{total_loss, LossBreakdown};
use stereolabel::optcore::{load_weights, optstereo_forward, GruDims, GruWeights, DEFAULT_ITERATIONS};
use stereolabel::pyramid::io::{encode_image_png, encode_pfm, load_image};
use stereolabel::pyramid::{colorize_disparity, load_disparity};
use stereolabel::DisparityMap;

use crate::config::{Overrides, RunConfig};
use crate::fsutil::write_atomic;

#[derive(Debug, Clone, clap::Args)]
pub struct ForwardArgs {
    pub left: PathBuf,
    pub right: PathBuf,
    /// Seeded random weights instead of a weights file.
    #[arg(long, conflicts_with = "weights", required_unless_present = "weights")]
    pub toy: bool,
    /// Weight sidecar file.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long = "iterations", default_value_t = DEFAULT_ITERATIONS)]
    pub iterations: usize,
    /// Hidden width of the toy weights.
    #[arg(long, default_value_t = GruDims::default().hidden)]
    pub hidden: usize,
    /// Descriptor length of the toy weights.
    #[arg(long, default_value_t = GruDims::default().feature_channels)]
    pub features: usize,
    /// Semi-dense labels; when given, the loss breakdown is printed.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

pub struct ForwardResult {
    pub iterates: Vec<DisparityMap>,
    pub loss: Option<LossBreakdown>,
}

pub fn run(args: &ForwardArgs) -> Result<ForwardResult> {
    let cfg = RunConfig::resolve(&args.overrides)?;
    if args.iterations == 0 {
        bail!("iterations must be at least 1");
    }
    let weights = match &args.weights {
        Some(p) => load_weights(p).with_context(|| format!("loading weights {}", p.display()))?,
        None => GruWeights::random(
            GruDims {
                hidden: args.hidden,
                feature_channels: args.features,
                ..GruDims::default()
            },
            cfg.seed,
            1.0,
        )?,
    };
    let left = load_image(&args.left)?;
    let right = load_image(&args.right)?;
    let iterates = cfg
        .pool()?
        .install(|| optstereo_forward(&left, &right, &weights, args.iterations))?;
    write_atomic(&args.out.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    for (k, d) in iterates.iter().enumerate() {
        write_atomic(&args.out.join(format!("iter_{:02}.pfm", k + 1)), &encode_pfm(d))?;
    }
    let last = iterates.last().expect("at least one iterate");
    write_atomic(&args.out.join("final.pfm"), &encode_pfm(last))?;
    let peak = last.values().iter().fold(0.0f32, |m, v| m.max(v.abs())).max(1.0);
    let preview = colorize_disparity(last, peak)?;
    write_atomic(&args.out.join("final_preview.png"), &encode_image_png(&preview, 8)?)?;
    let loss = match &args.labels {
        Some(p) => {
            let labels = load_disparity(p)?;
            let b = total_loss(&iterates, &labels, &left, &right, &cfg.loss())?;
            println!(
                "total {:.6} guiding {:.6} reconstruction {:.6} smoothness {:.6}",
                b.total, b.guiding, b.reconstruction, b.smoothness
            );
            Some(b)
        }
        None => None,
    };
    Ok(ForwardResult { iterates, loss })
}

//! Run configuration: TOML file, then command-line overrides.

use std::path::Path;

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use stereolabel::losses::LossConfig;
use stereolabel::pyramid::DEFAULT_EPSILON_GUARD;
use stereolabel::{CostKind, MatchParams, PvmConfig, PyramidSpec, VotingThresholds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CostName {
    Ncc,
    Sad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
    pub alpha: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        let d = LossConfig::default();
        Self {
            lambda1: d.lambda1,
            lambda2: d.lambda2,
            gamma: d.gamma,
            alpha: d.alpha,
        }
    }
}

/// Every tunable of a run. Missing keys take the library defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub levels: usize,
    pub seed: u64,
    pub epsilon_guard: f64,
    pub window_radius: usize,
    pub max_disparity: usize,
    pub cost: CostName,
    pub subpixel: bool,
    pub kappa1: f64,
    pub kappa2: f64,
    pub lrdcc_tolerance: f64,
    /// 0 picks the number of logical CPUs.
    pub workers: usize,
    pub loss: LossSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let pvm = PvmConfig::default();
        Self {
            levels: pvm.pyramid.levels,
            seed: pvm.pyramid.seed,
            epsilon_guard: DEFAULT_EPSILON_GUARD,
            window_radius: pvm.matching.window_radius,
            max_disparity: pvm.matching.max_disparity,
            cost: CostName::Ncc,
            subpixel: pvm.matching.subpixel,
            kappa1: pvm.thresholds.kappa1,
            kappa2: pvm.thresholds.kappa2,
            lrdcc_tolerance: pvm.lrdcc_tolerance,
            workers: 0,
            loss: LossSection::default(),
        }
    }
}

/// Flags shared by every command that runs the pipeline.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML file with any subset of the run configuration keys.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// Pyramid levels.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub kappa1: Option<f64>,
    #[arg(long)]
    pub kappa2: Option<f64>,
    /// Matching window radius (side is 2r+1).
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long = "max-disp")]
    pub max_disp: Option<usize>,
    #[arg(long = "lrdcc-tol")]
    pub lrdcc_tol: Option<f64>,
    #[arg(long)]
    pub cost: Option<CostName>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every logical CPU.
    #[arg(long, env = "STEREOLABEL_WORKERS")]
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// File (if any) with flags applied on top, validated.
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let mut c = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(v) = o.k {
            c.levels = v;
        }
        if let Some(v) = o.kappa1 {
            c.kappa1 = v;
        }
        if let Some(v) = o.kappa2 {
            c.kappa2 = v;
        }
        if let Some(v) = o.window {
            c.window_radius = v;
        }
        if let Some(v) = o.max_disp {
            c.max_disparity = v;
        }
        if let Some(v) = o.lrdcc_tol {
            c.lrdcc_tolerance = v;
        }
        if let Some(v) = o.cost {
            c.cost = v;
        }
        if let Some(v) = o.seed {
            c.seed = v;
        }
        if let Some(v) = o.workers {
            c.workers = v;
        }
        c.pvm().validate().context("invalid configuration")?;
        c.loss().validate().context("invalid loss configuration")?;
        Ok(c)
    }

    pub fn pvm(&self) -> PvmConfig {
        PvmConfig {
            pyramid: PyramidSpec {
                levels: self.levels,
                seed: self.seed,
                epsilon_guard: self.epsilon_guard,
            },
            matching: MatchParams {
                window_radius: self.window_radius,
                max_disparity: self.max_disparity,
                cost_kind: match self.cost {
                    CostName::Ncc => CostKind::Ncc,
                    CostName::Sad => CostKind::Sad,
                },
                subpixel: self.subpixel,
                ..MatchParams::default()
            },
            thresholds: VotingThresholds {
                kappa1: self.kappa1,
                kappa2: self.kappa2,
            },
            lrdcc_tolerance: self.lrdcc_tolerance,
        }
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            lambda1: self.loss.lambda1,
            lambda2: self.loss.lambda2,
            gamma: self.loss.gamma,
            alpha: self.loss.alpha,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Thread pool with the configured number of workers.
    pub fn pool(&self) -> Result<rayon::ThreadPool> {
        Ok(rayon::ThreadPoolBuilder::new().num_threads(self.workers).build()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        let back: RunConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.pvm(), PvmConfig::default());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "levels = 4\nkappa1 = 3.0\n[loss]\ngamma = 0.5\n").unwrap();
        let o = Overrides {
            config: Some(p),
            kappa1: Some(2.0),
            ..Overrides::default()
        };
        let c = RunConfig::resolve(&o).unwrap();
        assert_eq!((c.levels, c.kappa1, c.loss.gamma), (4, 2.0, 0.5));
    }

    #[test]
    fn rejects_bad_values_and_keys() {
        let o = Overrides {
            k: Some(1),
            ..Overrides::default()
        };
        assert!(RunConfig::resolve(&o).is_err());
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }
}

//! Command implementations behind the `stereolabel` binary.

pub mod commands;
pub mod config;
pub mod fsutil;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "stereolabel", version, about = "Semi-dense stereo pseudo-labels and tooling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate semi-dense labels for every pair of a dataset.
    Label(commands::label::LabelArgs),
    /// Compare predicted disparity maps with ground truth.
    Eval(commands::eval::EvalArgs),
    /// Write random-dot stereo scenes with exact ground truth.
    Synth(commands::synth::SynthArgs),
    /// Run the recurrent network forward pass on one pair.
    Forward(commands::forward::ForwardArgs),
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Label(a) => {
            let rows = commands::label::run(a)?;
            println!("labelled {} pairs into {}", rows.len(), a.out.display());
        }
        Command::Eval(a) => {
            commands::eval::run(a)?;
        }
        Command::Synth(a) => {
            let names = commands::synth::run(a)?;
            println!("wrote {} scenes to {}", names.len(), a.out.display());
        }
        Command::Forward(a) => {
            let r = commands::forward::run(a)?;
            println!("wrote {} iterates to {}", r.iterates.len(), a.out.display());
        }
    }
    Ok(())
}

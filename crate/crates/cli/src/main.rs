use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = stereolabel_cli::Cli::parse();
    match stereolabel_cli::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

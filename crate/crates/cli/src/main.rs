//! `calibfuse`: simulate heterogeneous agents, fit per-agent calibrators,
//! fuse detections and evaluate AP.
//!
//! Exit status: 0 success, 1 I/O failure, 2 bad config, 3 bad or inconsistent
//! data, 4 internal error.

mod commands;
mod error;
mod manifest;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::{calibrate, evaluate, fuse, report, simulate};
use error::{classify, ExitKind};

#[derive(Debug, Parser)]
#[command(name = "calibfuse", version, about = "Calibrated late fusion of multi-agent 3D detections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate evaluation detections, ground truth and calibration samples.
    Simulate(simulate::SimulateArgs),
    /// Fit a calibrator to labelled raw scores.
    Calibrate(calibrate::CalibrateArgs),
    /// Calibrate, transform and aggregate every frame's detections.
    Fuse(fuse::FuseArgs),
    /// Compute AP of fused detections, or of the standard methods with `--ablation`.
    Evaluate(evaluate::EvaluateArgs),
    /// Run the whole pipeline in memory and write the ablation table.
    Report(report::ReportArgs),
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Calibrate(a) => calibrate::run(a),
        Command::Fuse(a) => fuse::run(a),
        Command::Evaluate(a) => evaluate::run(a),
        Command::Report(a) => report::run(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match catch_unwind(AssertUnwindSafe(|| run(&cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(classify(&e) as u8)
        }
        Err(_) => ExitCode::from(ExitKind::Internal as u8),
    }
}

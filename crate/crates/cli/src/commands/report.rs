use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use calibfuse_core::calibration::{FitOptions, DEFAULT_NUM_BINS};
use calibfuse_core::evaluation::{ablation_report, EvalFrame};
use calibfuse_core::simulation::{generate, make_calibration_splits};
use calibfuse_core::{AgentId, Calibrator, CalibratorKind};
use clap::Args;

use super::calibrate::{fit_one, summary_line, write_reliability_pair};
use super::evaluate::{named_methods, print_rows, write_outputs};
use super::{load_eval_config, load_fusion_config, FusionFlags, ScenarioArgs};
use crate::manifest::RunManifest;

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Calibrator family fitted per agent.
    #[arg(long, default_value = "dbs")]
    pub calibrator: CalibratorKind,
    /// Fusion config TOML used as the base of every row.
    #[arg(long)]
    pub fusion_config: Option<PathBuf>,
    /// Evaluation config TOML.
    #[arg(long)]
    pub eval_config: Option<PathBuf>,
    #[command(flatten)]
    pub fusion: FusionFlags,
}

/// Simulates, fits one calibrator per agent on the calibration split and
/// writes the ablation table, PR curves and reliability diagrams.
pub fn run(args: &ReportArgs) -> Result<()> {
    let mut m = RunManifest::new("report");
    let scenario = args.scenario.resolve(&mut m)?;
    let eval = load_eval_config(&mut m, args.eval_config.as_deref(), args.fusion.iou)?;
    let base = load_fusion_config(&mut m, args.fusion_config.as_deref(), &args.fusion)?;

    let frames = m.time("generate", || generate(&scenario))?;
    let samples = m.time("calibration split", || make_calibration_splits(&scenario))?;

    let start = Instant::now();
    let mut cals: BTreeMap<AgentId, Calibrator> = BTreeMap::new();
    for (id, data) in &samples {
        let s = fit_one(args.calibrator, data, &FitOptions::default(), DEFAULT_NUM_BINS)
            .with_context(|| format!("fitting agent `{id}`"))?;
        println!("{}", summary_line(id.as_str(), data.len(), &s));
        m.write(&args.out.join(format!("calibrators/{id}.toml")), s.document.to_toml().as_bytes())?;
        write_reliability_pair(&mut m, &args.out.join("reliability"), id.as_str(), data, &s.calibrator, DEFAULT_NUM_BINS)?;
        cals.insert(id.clone(), s.calibrator);
    }
    m.record("calibrate", start);

    let eval_frames: Vec<EvalFrame> = frames.iter().map(|f| EvalFrame::from_simulated(f, &scenario.ego)).collect();
    let methods = named_methods(&base, args.calibrator);
    let rows = m.time("ablation", || ablation_report(&eval_frames, &scenario.ego, &methods, &cals, &eval))?;
    write_outputs(&mut m, &rows, &eval, &args.out.join("report.csv"), Some(&args.out.join("pr")))?;
    m.save(&args.out.join("manifest.json"))?;
    print_rows(&rows);
    Ok(())
}

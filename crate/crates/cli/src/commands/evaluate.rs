use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use calibfuse_core::calibration::io::read_samples;
use calibfuse_core::calibration::DEFAULT_NUM_BINS;
use calibfuse_core::evaluation::{
    ablation_report, average_precision, match_frames, standard_methods, write_pr_curve_csv, write_report_csv,
    EvalConfig, EvalFrame, EvaluationError, Method, ReportRow,
};
use calibfuse_core::{AgentId, Box3D, CalibratorKind, CandidateSet, FusionConfig};
use clap::Args;

use super::calibrate::write_reliability_pair;
use super::fuse::resolve_calibrators;
use super::{
    file_stem, list_files, load_eval_config, load_fusion_config, read_detections_dir, read_ground_truth,
    read_record_file, FusionFlags,
};
use crate::error::{config_err, data_err};
use crate::manifest::{sibling_manifest, RunManifest};

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Fused detections file (single-method mode).
    #[arg(long, required_unless_present = "ablation")]
    pub fused: Option<PathBuf>,
    /// Ground-truth records in the ego frame.
    #[arg(long)]
    pub gt: PathBuf,
    /// Report CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Evaluation config TOML.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for per-method precision-recall CSVs.
    #[arg(long)]
    pub pr_dir: Option<PathBuf>,
    /// Fuse the raw detections with the five standard methods and report each.
    #[arg(long, requires = "detections")]
    pub ablation: bool,
    /// Per-agent detections directory (ablation mode).
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Directory of `<agent>.toml` calibrators (ablation mode, reliability).
    #[arg(long)]
    pub calibrators: Option<PathBuf>,
    /// Fusion config TOML used as the base of every ablation row.
    #[arg(long)]
    pub fusion_config: Option<PathBuf>,
    /// Calibrator family named in the calibrated rows.
    #[arg(long, default_value = "dbs")]
    pub calibrator: CalibratorKind,
    #[arg(long, default_value = "ego")]
    pub ego: String,
    /// Directory of `<agent>.csv` calibration samples for reliability diagrams.
    #[arg(long, requires = "reliability")]
    pub samples: Option<PathBuf>,
    /// Directory for per-agent reliability-diagram CSVs.
    #[arg(long, requires = "samples")]
    pub reliability: Option<PathBuf>,
    #[command(flatten)]
    pub fusion: FusionFlags,
}

/// The five standard rows with the calibrated ones named after `kind`.
pub fn named_methods(base: &FusionConfig, kind: CalibratorKind) -> Vec<Method> {
    let mut methods = standard_methods(base);
    for m in &mut methods {
        m.name = m.name.replace("+dbs", &format!("+{kind}"));
    }
    methods
}

fn check_frames_known(frames: impl Iterator<Item = u64>, gt: &BTreeMap<u64, (calibfuse_core::Pose2D, Vec<Box3D>)>) -> Result<()> {
    for f in frames {
        if !gt.contains_key(&f) {
            return Err(EvaluationError::MissingFrame(f).into());
        }
    }
    Ok(())
}

fn single(args: &EvaluateArgs, m: &mut RunManifest, eval: &EvalConfig) -> Result<Vec<ReportRow>> {
    let fused_path = args.fused.as_deref().expect("required without --ablation");
    let gt = read_ground_truth(m, &args.gt)?;
    let records = read_record_file(m, fused_path)?;
    let mut fused: BTreeMap<u64, CandidateSet> = BTreeMap::new();
    for r in &records {
        let c = r.to_candidates()?;
        if fused.insert(r.frame, c).is_some() {
            return Err(data_err(format!("{} lists frame {} more than once", fused_path.display(), r.frame)));
        }
    }
    check_frames_known(fused.keys().copied(), &gt)?;
    let dets: Vec<CandidateSet> = gt.keys().map(|f| fused.remove(f).unwrap_or_default()).collect();
    let gts: Vec<Vec<Box3D>> = gt.into_values().map(|(_, b)| b).collect();
    let curve = average_precision(&match_frames(&dets, &gts, eval))?;
    Ok(vec![ReportRow {
        method: "fused".to_owned(),
        curve,
    }])
}

fn ablation(args: &EvaluateArgs, m: &mut RunManifest, eval: &EvalConfig) -> Result<Vec<ReportRow>> {
    let mut flags = args.fusion.clone();
    flags.iou = flags.iou.or(Some(eval.iou_variant));
    let base = load_fusion_config(m, args.fusion_config.as_deref(), &flags)?;
    let gt = read_ground_truth(m, &args.gt)?;
    let mut dets = read_detections_dir(m, args.detections.as_deref().expect("required by --ablation"))?;
    check_frames_known(dets.keys().copied(), &gt)?;
    let agents: BTreeSet<AgentId> = dets.values().flatten().map(|a| a.agent_id.clone()).collect();
    let cals = resolve_calibrators(m, args.calibrators.as_deref(), Some(args.calibrator), agents.into_iter())?;
    let frames: Vec<EvalFrame> = gt
        .into_iter()
        .map(|(frame, (_, boxes))| EvalFrame {
            frame,
            ground_truth: boxes,
            agents: dets.remove(&frame).unwrap_or_default(),
        })
        .collect();
    let ego = AgentId::new(args.ego.as_str());
    Ok(ablation_report(&frames, &ego, &named_methods(&base, args.calibrator), &cals, eval)?)
}

pub fn write_outputs(m: &mut RunManifest, rows: &[ReportRow], eval: &EvalConfig, report: &Path, pr_dir: Option<&Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_report_csv(&mut buf, rows, eval)?;
    m.write(report, &buf)?;
    if let Some(dir) = pr_dir {
        for row in rows {
            let mut buf = Vec::new();
            write_pr_curve_csv(&mut buf, &row.curve)?;
            m.write(&dir.join(format!("{}.csv", row.method)), &buf)?;
        }
    }
    Ok(())
}

pub fn print_rows(rows: &[ReportRow]) {
    println!("{:<12} {:>10} {:>8} {:>8} {:>8}", "method", "ap", "tp", "fp", "fn");
    for r in rows {
        let c = &r.curve;
        println!(
            "{:<12} {:>10.4} {:>8} {:>8} {:>8}",
            r.method,
            c.ap,
            c.tp,
            c.fp,
            c.num_gt - c.tp
        );
    }
}

pub fn run(args: &EvaluateArgs) -> Result<()> {
    let mut m = RunManifest::new(if args.ablation { "evaluate --ablation" } else { "evaluate" });
    let eval = load_eval_config(&mut m, args.config.as_deref(), args.fusion.iou)?;
    m.set_config(&toml::to_string(&eval).expect("config serializes"));
    if args.ablation && args.fused.is_some() {
        return Err(config_err("--fused and --ablation are exclusive"));
    }

    let start = Instant::now();
    let rows = if args.ablation {
        ablation(args, &mut m, &eval)?
    } else {
        single(args, &mut m, &eval)?
    };
    m.record("evaluate", start);
    write_outputs(&mut m, &rows, &eval, &args.out, args.pr_dir.as_deref())?;

    if let (Some(samples), Some(dir)) = (&args.samples, &args.reliability) {
        let cals = resolve_calibrators(&mut m, args.calibrators.as_deref(), None, std::iter::empty())?;
        for path in list_files(samples, "csv")? {
            let name = file_stem(&path);
            let text = m.read(&path)?;
            let data = read_samples(text.as_bytes()).with_context(|| format!("samples {}", path.display()))?;
            let cal = cals
                .get(&AgentId::new(name.as_str()))
                .copied()
                .unwrap_or_else(calibfuse_core::Calibrator::identity);
            write_reliability_pair(&mut m, dir, &name, &data, &cal, DEFAULT_NUM_BINS)?;
        }
    }

    m.save(&sibling_manifest(&args.out))?;
    print_rows(&rows);
    Ok(())
}

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use calibfuse_core::calibration::io::{read_samples, CalibratorDocument};
use calibfuse_core::calibration::{bce_loss, expected_calibration_error, fit, reliability, FitOptions, DEFAULT_NUM_BINS};
use calibfuse_core::evaluation::write_reliability_csv;
use calibfuse_core::numfmt::fmt_sig9;
use calibfuse_core::{CalibrationSample, Calibrator, CalibratorKind};
use clap::Args;

use super::{file_stem, list_files};
use crate::error::config_err;
use crate::manifest::{sibling_manifest, RunManifest};

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Samples CSV (`raw_score,label`), or a directory of `<agent>.csv` files.
    #[arg(long)]
    pub samples: PathBuf,
    /// Calibrator family: dbs, platt, temperature or identity.
    #[arg(long, default_value = "dbs")]
    pub calibrator: CalibratorKind,
    /// Fitted calibrator TOML, or a directory when `--samples` is one.
    #[arg(long)]
    pub out: PathBuf,
    /// Optimizer settings TOML.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for reliability-diagram CSVs before and after calibration.
    #[arg(long)]
    pub reliability: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_NUM_BINS)]
    pub bins: usize,
}

/// Fit summary printed per agent.
pub struct Summary {
    pub calibrator: Calibrator,
    pub document: CalibratorDocument,
    pub bce_before: f64,
    pub bce_after: f64,
    pub ece_before: f64,
    pub ece_after: f64,
}

pub fn fit_one(kind: CalibratorKind, samples: &[CalibrationSample], opts: &FitOptions, bins: usize) -> Result<Summary> {
    let fitted = fit(kind, samples, opts)?;
    let identity = Calibrator::identity();
    Ok(Summary {
        calibrator: fitted.calibrator,
        document: CalibratorDocument::from_fitted(&fitted),
        bce_before: bce_loss(&identity, samples)?,
        bce_after: bce_loss(&fitted.calibrator, samples)?,
        ece_before: expected_calibration_error(samples, &identity, bins)?,
        ece_after: expected_calibration_error(samples, &fitted.calibrator, bins)?,
    })
}

pub fn summary_line(name: &str, n: usize, s: &Summary) -> String {
    format!(
        "{name}: {} a={} b={} samples={n} bce {} -> {} ece {} -> {}",
        s.calibrator.kind(),
        fmt_sig9(s.calibrator.a()),
        fmt_sig9(s.calibrator.b()),
        fmt_sig9(s.bce_before),
        fmt_sig9(s.bce_after),
        fmt_sig9(s.ece_before),
        fmt_sig9(s.ece_after)
    )
}

pub fn write_reliability_pair(
    m: &mut RunManifest,
    dir: &Path,
    name: &str,
    samples: &[CalibrationSample],
    cal: &Calibrator,
    bins: usize,
) -> Result<()> {
    for (suffix, c) in [("raw", Calibrator::identity()), ("calibrated", *cal)] {
        let diagram = reliability(samples, &c, bins)?;
        let mut buf = Vec::new();
        write_reliability_csv(&mut buf, &diagram)?;
        m.write(&dir.join(format!("{name}_{suffix}.csv")), &buf)?;
    }
    Ok(())
}

pub fn run(args: &CalibrateArgs) -> Result<()> {
    let mut m = RunManifest::new("calibrate");
    if args.bins == 0 {
        return Err(config_err("--bins must be at least 1"));
    }
    let opts: FitOptions = match &args.config {
        Some(p) => {
            let text = m.read(p)?;
            m.set_config(&text);
            toml::from_str(&text).with_context(|| format!("parsing fit options {}", p.display()))?
        }
        None => FitOptions::default(),
    };

    let batch = args.samples.is_dir();
    let inputs: Vec<PathBuf> = if batch {
        list_files(&args.samples, "csv")?
    } else {
        vec![args.samples.clone()]
    };
    for path in &inputs {
        let name = file_stem(path);
        let text = m.read(path)?;
        let samples = read_samples(text.as_bytes()).with_context(|| format!("samples {}", path.display()))?;
        let summary = m
            .time(&format!("fit {name}"), || fit_one(args.calibrator, &samples, &opts, args.bins))
            .with_context(|| format!("fitting {}", path.display()))?;
        let target = if batch {
            args.out.join(format!("{name}.toml"))
        } else {
            args.out.clone()
        };
        m.write(&target, summary.document.to_toml().as_bytes())?;
        if let Some(dir) = &args.reliability {
            write_reliability_pair(&mut m, dir, &name, &samples, &summary.calibrator, args.bins)?;
        }
        println!("{}", summary_line(&name, samples.len(), &summary));
    }

    let manifest_path = if batch {
        args.out.join("manifest.json")
    } else {
        sibling_manifest(&args.out)
    };
    m.save(&manifest_path)
}

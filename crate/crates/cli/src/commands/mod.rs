pub mod calibrate;
pub mod evaluate;
pub mod fuse;
pub mod report;
pub mod simulate;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use calibfuse_core::calibration::io::CalibratorDocument;
use calibfuse_core::evaluation::EvalConfig;
use calibfuse_core::exchange::{read_records, DetectionRecord};
use calibfuse_core::fusion::Aggregator;
use calibfuse_core::simulation::{Preset, Scenario};
use calibfuse_core::{AgentDetections, AgentId, Box3D, Calibrator, FusionConfig, IouVariant, Pose2D};
use clap::{ArgAction, Args};

use crate::error::{config_err, data_err};
use crate::manifest::RunManifest;

/// Overrides applied on top of a fusion config file.
#[derive(Debug, Clone, Default, Args)]
pub struct FusionFlags {
    /// Box aggregator: psa, nms or softnms.
    #[arg(long)]
    pub aggregator: Option<Aggregator>,
    /// IoU variant for graph edges, suppression and matching: bev or 3d.
    #[arg(long)]
    pub iou: Option<IouVariant>,
    /// PSA softmax temperature.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// PSA selection threshold.
    #[arg(long)]
    pub phi: Option<f64>,
    /// Fail when an agent has no calibrator (`--strict false` falls back to identity).
    #[arg(long, action = ArgAction::Set, value_name = "BOOL")]
    pub strict: Option<bool>,
}

impl FusionFlags {
    pub fn apply(&self, cfg: &mut FusionConfig) {
        if let Some(a) = self.aggregator {
            cfg.aggregator = a;
        }
        if let Some(v) = self.iou {
            cfg.iou_variant = v;
        }
        if let Some(e) = self.epsilon {
            cfg.psa.epsilon = e;
        }
        if let Some(p) = self.phi {
            cfg.psa.phi = p;
        }
        if let Some(s) = self.strict {
            cfg.strict = s;
        }
    }
}

/// Where a scenario comes from: a config file or a named preset.
#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Scenario TOML file.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in scenario: homo, hetero1 or hetero2.
    #[arg(long)]
    pub preset: Option<Preset>,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the number of evaluation frames.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Overrides the number of calibration frames.
    #[arg(long)]
    pub calibration_frames: Option<usize>,
}

impl ScenarioArgs {
    pub fn resolve(&self, manifest: &mut RunManifest) -> Result<Scenario> {
        let mut s = match (&self.config, self.preset) {
            (Some(path), _) => {
                let text = manifest.read(path)?;
                let mut table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                if let Some(seed) = self.seed {
                    table.insert("seed".into(), toml::Value::Integer(seed as i64));
                }
                if let Some(f) = self.frames {
                    table.insert("frames".into(), toml::Value::Integer(f as i64));
                }
                Scenario::from_toml(&toml::to_string(&table).expect("table serializes"))
                    .with_context(|| format!("scenario {}", path.display()))?
            }
            (None, Some(p)) => {
                let seed = self.seed.ok_or_else(|| config_err("a preset needs --seed"))?;
                Scenario::preset(p, seed, self.frames.unwrap_or(500))
            }
            (None, None) => return Err(config_err("give --config or --preset")),
        };
        if let Some(c) = self.calibration_frames {
            s.calibration_frames = c;
        }
        s.validate()?;
        manifest.set_config(&s.to_toml());
        manifest.seed = Some(s.seed);
        Ok(s)
    }
}

pub fn load_fusion_config(manifest: &mut RunManifest, path: Option<&Path>, flags: &FusionFlags) -> Result<FusionConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = manifest.read(p)?;
            toml::from_str(&text).with_context(|| format!("parsing fusion config {}", p.display()))?
        }
        None => FusionConfig::default(),
    };
    flags.apply(&mut cfg);
    cfg.validate().map_err(|e| config_err(e.to_string()))?;
    Ok(cfg)
}

pub fn load_eval_config(manifest: &mut RunManifest, path: Option<&Path>, iou: Option<IouVariant>) -> Result<EvalConfig> {
    let mut cfg: EvalConfig = match path {
        Some(p) => {
            let text = manifest.read(p)?;
            toml::from_str(&text).with_context(|| format!("parsing evaluation config {}", p.display()))?
        }
        None => EvalConfig::default(),
    };
    if let Some(v) = iou {
        cfg.iou_variant = v;
    }
    if !(0.0..=1.0).contains(&cfg.iou_threshold) {
        return Err(config_err("iou_threshold must lie in [0, 1]"));
    }
    Ok(cfg)
}

/// Files in `dir` with extension `ext`, sorted by name.
pub fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn read_record_file(manifest: &mut RunManifest, path: &Path) -> Result<Vec<DetectionRecord>> {
    let text = manifest.read(path)?;
    read_records(text.as_bytes()).with_context(|| format!("reading {}", path.display()))
}

/// Per-frame detections of every agent found in `dir/*.jsonl`.
pub fn read_detections_dir(manifest: &mut RunManifest, dir: &Path) -> Result<BTreeMap<u64, Vec<AgentDetections>>> {
    let mut frames: BTreeMap<u64, Vec<AgentDetections>> = BTreeMap::new();
    for path in list_files(dir, "jsonl")? {
        for rec in read_record_file(manifest, &path)? {
            let dets = rec
                .to_agent_detections()
                .with_context(|| format!("{}: frame {}", path.display(), rec.frame))?;
            let slot = frames.entry(rec.frame).or_default();
            if slot.iter().any(|a| a.agent_id == dets.agent_id) {
                return Err(data_err(format!(
                    "frame {}: agent `{}` appears more than once",
                    rec.frame, dets.agent_id
                )));
            }
            slot.push(dets);
        }
    }
    for agents in frames.values_mut() {
        agents.sort_by(|a, b| a.agent_id.cmp(&b.agent_id));
    }
    Ok(frames)
}

/// Calibrators from `dir/<agent>.toml`.
pub fn read_calibrators_dir(manifest: &mut RunManifest, dir: &Path) -> Result<BTreeMap<AgentId, Calibrator>> {
    let mut out = BTreeMap::new();
    for path in list_files(dir, "toml")? {
        let text = manifest.read(&path)?;
        let cal = CalibratorDocument::from_toml(&text)
            .and_then(|d| d.calibrator())
            .with_context(|| format!("calibrator {}", path.display()))?;
        out.insert(AgentId::new(file_stem(&path)), cal);
    }
    Ok(out)
}

/// Ground-truth boxes (ego frame) and the ego pose, keyed by frame.
pub fn read_ground_truth(manifest: &mut RunManifest, path: &Path) -> Result<BTreeMap<u64, (Pose2D, Vec<Box3D>)>> {
    let mut out = BTreeMap::new();
    for rec in read_record_file(manifest, path)? {
        let boxes = rec.boxes().with_context(|| format!("{}: frame {}", path.display(), rec.frame))?;
        let pose = Pose2D::new(rec.pose.x, rec.pose.y, rec.pose.yaw)?;
        if out.insert(rec.frame, (pose, boxes)).is_some() {
            return Err(data_err(format!("ground truth lists frame {} more than once", rec.frame)));
        }
    }
    Ok(out)
}

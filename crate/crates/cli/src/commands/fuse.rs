use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use calibfuse_core::exchange::{write_records, DetectionRecord};
use calibfuse_core::fusion::fuse;
use calibfuse_core::par;
use calibfuse_core::{AgentDetections, AgentId, Calibrator, CalibratorKind, FusionConfig};
use clap::Args;

use super::{load_fusion_config, read_calibrators_dir, read_detections_dir, FusionFlags};
use crate::error::{config_err, data_err};
use crate::manifest::{sibling_manifest, RunManifest};

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Directory of per-agent detection files (`*.jsonl`).
    #[arg(long)]
    pub detections: PathBuf,
    /// Directory of `<agent>.toml` calibrators.
    #[arg(long)]
    pub calibrators: Option<PathBuf>,
    /// Fusion config TOML.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Fused detections file.
    #[arg(long)]
    pub out: PathBuf,
    /// Receiving agent; output boxes are in its frame.
    #[arg(long, default_value = "ego")]
    pub ego: String,
    /// `identity` ignores the calibrator files; any other family is checked
    /// against them.
    #[arg(long)]
    pub calibrator: Option<CalibratorKind>,
    #[command(flatten)]
    pub fusion: FusionFlags,
}

/// Loads calibrators for a run: none for `identity`, otherwise the files in
/// `dir`, each checked against `expected` when given.
pub fn resolve_calibrators(
    m: &mut RunManifest,
    dir: Option<&Path>,
    expected: Option<CalibratorKind>,
    agents: impl Iterator<Item = AgentId>,
) -> Result<BTreeMap<AgentId, Calibrator>> {
    if expected == Some(CalibratorKind::Identity) {
        return Ok(agents.map(|a| (a, Calibrator::identity())).collect());
    }
    let cals = match dir {
        Some(d) => read_calibrators_dir(m, d)?,
        None => BTreeMap::new(),
    };
    if let Some(kind) = expected {
        if let Some((id, c)) = cals.iter().find(|(_, c)| c.kind() != kind) {
            return Err(config_err(format!(
                "calibrator for agent `{id}` is {}, expected {kind}",
                c.kind()
            )));
        }
    }
    Ok(cals)
}

/// Splits a frame's agents into the ego and the rest.
pub fn split_ego<'a>(frame: u64, agents: &'a [AgentDetections], ego: &AgentId) -> Result<(&'a AgentDetections, Vec<AgentDetections>)> {
    let e = agents
        .iter()
        .find(|a| &a.agent_id == ego)
        .ok_or_else(|| data_err(format!("frame {frame}: no detections from ego agent `{ego}`")))?;
    let others = agents.iter().filter(|a| &a.agent_id != ego).cloned().collect();
    Ok((e, others))
}

pub fn fuse_frames(
    frames: &BTreeMap<u64, Vec<AgentDetections>>,
    ego: &AgentId,
    cals: &BTreeMap<AgentId, Calibrator>,
    cfg: &FusionConfig,
) -> Result<Vec<DetectionRecord>> {
    let items: Vec<(&u64, &Vec<AgentDetections>)> = frames.iter().collect();
    par::map_slice(&items, |(frame, agents)| {
        let (e, others) = split_ego(**frame, agents, ego)?;
        let fused = fuse(e, &others, cals, cfg).with_context(|| format!("fusing frame {frame}"))?;
        Ok(DetectionRecord::from_candidates(**frame, &e.pose, &fused))
    })
    .into_iter()
    .collect()
}

pub fn run(args: &FuseArgs) -> Result<()> {
    let mut m = RunManifest::new("fuse");
    let cfg = load_fusion_config(&mut m, args.config.as_deref(), &args.fusion)?;
    m.set_config(&toml::to_string(&cfg).expect("config serializes"));

    let start = Instant::now();
    let frames = read_detections_dir(&mut m, &args.detections)?;
    let agents: BTreeSet<AgentId> = frames.values().flatten().map(|a| a.agent_id.clone()).collect();
    let cals = resolve_calibrators(&mut m, args.calibrators.as_deref(), args.calibrator, agents.into_iter())?;
    m.record("read", start);

    let ego = AgentId::new(args.ego.as_str());
    let records = m.time("fuse", || fuse_frames(&frames, &ego, &cals, &cfg))?;
    let mut buf = Vec::new();
    write_records(&mut buf, &records)?;
    m.write(&args.out, &buf)?;
    m.save(&sibling_manifest(&args.out))?;
    let boxes: usize = records.iter().map(|r| r.detections.len()).sum();
    println!(
        "fused {} frames with {}: {boxes} boxes written to {}",
        records.len(),
        cfg.aggregator,
        args.out.display()
    );
    Ok(())
}

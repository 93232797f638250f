//! Late-fusion pipeline.
//!
//! Every agent shares only boxes, scores and its pose. The ego vehicle moves the
//! boxes into its own frame, applies each agent's calibrator, drops boxes
//! outside the evaluation range or below the score pre-filter, and aggregates
//! the merged candidates with PSA (or an NMS baseline).

mod pose;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{nms, psa_with_threshold, soft_nms, AggregationError, CandidateSet, PsaParams, SoftNmsParams};
use crate::calibration::Calibrator;
use crate::geometry::{Box3D, FrameId, GeometryError, IouVariant};
use crate::par;

pub use pose::Pose2D;

/// Frame label carried by every box after [`transform_to_ego`].
pub const EGO_FRAME: &str = "ego";

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("no calibrator for agent `{0}`")]
    MissingCalibrator(AgentId),
    #[error("invalid fusion config: {0}")]
    InvalidConfig(String),
    #[error("agent `{agent}`: score {score} outside [0, 1]")]
    ScoreOutOfRange { agent: AgentId, score: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(String);

impl AgentId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AgentId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

/// What one agent shares for one frame: boxes in its own frame with raw scores.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentDetections {
    pub agent_id: AgentId,
    pub pose: Pose2D,
    pub detections: Vec<(Box3D, f64)>,
    /// Key into the calibrator map; normally the agent id.
    pub calibrator_ref: String,
}

impl AgentDetections {
    pub fn new(agent_id: AgentId, pose: Pose2D, detections: Vec<(Box3D, f64)>) -> Self {
        let calibrator_ref = agent_id.as_str().to_owned();
        Self {
            agent_id,
            pose,
            detections,
            calibrator_ref,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    #[default]
    Psa,
    Nms,
    #[serde(rename = "softnms")]
    SoftNms,
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregator::Psa => "psa",
            Aggregator::Nms => "nms",
            Aggregator::SoftNms => "softnms",
        })
    }
}

impl std::str::FromStr for Aggregator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "psa" => Ok(Aggregator::Psa),
            "nms" => Ok(Aggregator::Nms),
            "softnms" | "soft-nms" | "soft_nms" => Ok(Aggregator::SoftNms),
            other => Err(format!("unknown aggregator `{other}` (expected psa, nms or softnms)")),
        }
    }
}

/// Axis-aligned region of the ego frame, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeLimits {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl RangeLimits {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    pub fn contains_box(&self, b: &Box3D) -> bool {
        self.contains(b.cx(), b.cy())
    }
}

impl Default for RangeLimits {
    fn default() -> Self {
        Self {
            x_min: -140.0,
            x_max: 140.0,
            y_min: -40.0,
            y_max: 40.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub aggregator: Aggregator,
    pub psa: PsaParams,
    pub nms_iou_threshold: f64,
    pub soft_nms: SoftNmsParams,
    /// Calibrated detections below this are dropped before aggregation.
    pub pre_filter_score: f64,
    pub iou_variant: IouVariant,
    pub range: RangeLimits,
    /// Graph edges need IoU strictly above this.
    pub min_edge_iou: f64,
    /// Missing calibrators are an error rather than falling back to identity.
    pub strict: bool,
    pub calibrate_ego: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            aggregator: Aggregator::Psa,
            psa: PsaParams::default(),
            nms_iou_threshold: 0.15,
            soft_nms: SoftNmsParams::default(),
            pre_filter_score: 0.05,
            iou_variant: IouVariant::ThreeD,
            range: RangeLimits::default(),
            min_edge_iou: 0.0,
            strict: true,
            calibrate_ego: true,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        self.psa.validate()?;
        let bad = |m: &str| Err(FusionError::InvalidConfig(m.to_owned()));
        if !(0.0..=1.0).contains(&self.nms_iou_threshold) {
            return bad("nms_iou_threshold must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.pre_filter_score) {
            return bad("pre_filter_score must lie in [0, 1]");
        }
        if self.soft_nms.sigma.is_nan() || self.soft_nms.sigma <= 0.0 || !(0.0..=1.0).contains(&self.soft_nms.score_floor) {
            return bad("soft_nms needs sigma > 0 and score_floor in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.min_edge_iou) {
            return bad("min_edge_iou must lie in [0, 1)");
        }
        let r = &self.range;
        if !(r.x_min < r.x_max && r.y_min < r.y_max) {
            return bad("range limits must satisfy min < max");
        }
        Ok(())
    }
}

/// Moves an agent's boxes into the ego frame. Scores are untouched.
pub fn transform_to_ego(dets: &AgentDetections, ego_pose: &Pose2D) -> Result<Vec<(Box3D, f64)>, GeometryError> {
    dets.detections
        .iter()
        .map(|(b, s)| Ok((dets.pose.transform_box(b, ego_pose, FrameId::new(EGO_FRAME))?, *s)))
        .collect()
}

fn calibrated_candidates(
    agent: &AgentDetections,
    is_ego: bool,
    ego_pose: &Pose2D,
    calibrators: &BTreeMap<AgentId, Calibrator>,
    cfg: &FusionConfig,
) -> Result<Vec<(Box3D, f64)>, FusionError> {
    let cal = if is_ego && !cfg.calibrate_ego {
        Calibrator::identity()
    } else {
        match calibrators.get(&AgentId::new(agent.calibrator_ref.as_str())) {
            Some(c) => *c,
            None if cfg.strict => return Err(FusionError::MissingCalibrator(agent.agent_id.clone())),
            None => Calibrator::identity(),
        }
    };
    if let Some((_, s)) = agent.detections.iter().find(|(_, s)| !(0.0..=1.0).contains(s)) {
        return Err(FusionError::ScoreOutOfRange {
            agent: agent.agent_id.clone(),
            score: *s,
        });
    }
    Ok(transform_to_ego(agent, ego_pose)?
        .into_iter()
        .map(|(b, raw)| (b, cal.apply(raw)))
        .filter(|(b, s)| cfg.range.contains_box(b) && *s >= cfg.pre_filter_score)
        .collect())
}

/// Runs aggregation on already calibrated candidates; returns the survivors.
pub fn aggregate(cands: &CandidateSet, cfg: &FusionConfig) -> CandidateSet {
    match cfg.aggregator {
        Aggregator::Psa => cands.subset(&psa_with_threshold(cands, &cfg.psa, cfg.iou_variant, cfg.min_edge_iou)),
        Aggregator::Nms => cands.subset(&nms(cands, cfg.nms_iou_threshold, cfg.iou_variant)),
        Aggregator::SoftNms => soft_nms(cands, &cfg.soft_nms, cfg.iou_variant),
    }
}

/// Full late-fusion step for one frame.
///
/// Agents are merged in `agent_id` order, so the order of `others` does not
/// matter. With no other agents this is calibrated single-agent aggregation.
pub fn fuse(
    ego: &AgentDetections,
    others: &[AgentDetections],
    calibrators: &BTreeMap<AgentId, Calibrator>,
    cfg: &FusionConfig,
) -> Result<CandidateSet, FusionError> {
    cfg.validate()?;
    let mut agents: Vec<(&AgentDetections, bool)> = std::iter::once((ego, true))
        .chain(others.iter().map(|o| (o, false)))
        .collect();
    agents.sort_by(|a, b| a.0.agent_id.cmp(&b.0.agent_id).then(b.1.cmp(&a.1)));

    let per_agent = par::map_slice(&agents, |(agent, is_ego)| {
        calibrated_candidates(agent, *is_ego, &ego.pose, calibrators, cfg).map(|c| (agent.agent_id.clone(), c))
    });
    let mut merged = CandidateSet::empty();
    for result in per_agent {
        let (id, cands) = result?;
        for (b, s) in cands {
            merged.push(b, s, id.clone())?;
        }
    }
    Ok(aggregate(&merged, cfg))
}

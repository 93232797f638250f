//! Line-delimited JSON detection exchange format.
//!
//! One record per (frame, agent):
//!
//! ```text
//! {"frame":0,"agent_id":"cav1","pose":{"x":70.0,"y":0.0,"yaw":3.14159265},"detections":[{"cx":..,"cy":..,"cz":..,"length":..,"width":..,"height":..,"yaw":..,"score":..}]}
//! ```
//!
//! Boxes are expressed in the frame given by `pose`. Fused output uses the agent
//! id `fused` with the ego pose; ground truth uses the same shape with score 1.
//! Every number is rounded to 9 significant digits before writing.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::CandidateSet;
use crate::fusion::{AgentDetections, AgentId, Pose2D, EGO_FRAME};
use crate::geometry::{Box3D, FrameId, GeometryError};
use crate::numfmt::round_sig9;

pub const FUSED_AGENT: &str = "fused";
pub const GROUND_TRUTH_AGENT: &str = "ground_truth";

#[derive(Debug, Error)]
pub enum ExchangeError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    Geometry { line: usize, source: GeometryError },
    #[error("frame {frame}, agent `{agent}`: {message}")]
    Invalid { frame: u64, agent: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionEntry {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub yaw: f64,
    pub score: f64,
}

impl DetectionEntry {
    pub fn new(b: &Box3D, score: f64) -> Self {
        Self {
            cx: round_sig9(b.cx()),
            cy: round_sig9(b.cy()),
            cz: round_sig9(b.cz()),
            length: round_sig9(b.length()),
            width: round_sig9(b.width()),
            height: round_sig9(b.height()),
            yaw: round_sig9(b.yaw()),
            score: round_sig9(score),
        }
    }

    pub fn to_box(&self, frame: FrameId) -> Result<Box3D, GeometryError> {
        Box3D::new(self.cx, self.cy, self.cz, self.length, self.width, self.height, self.yaw, frame)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub frame: u64,
    pub agent_id: String,
    pub pose: Pose2D,
    pub detections: Vec<DetectionEntry>,
}

fn rounded_pose(p: &Pose2D) -> Pose2D {
    Pose2D {
        x: round_sig9(p.x),
        y: round_sig9(p.y),
        yaw: round_sig9(p.yaw),
    }
}

impl DetectionRecord {
    pub fn from_agent(frame: u64, dets: &AgentDetections) -> Self {
        Self {
            frame,
            agent_id: dets.agent_id.as_str().to_owned(),
            pose: rounded_pose(&dets.pose),
            detections: dets.detections.iter().map(|(b, s)| DetectionEntry::new(b, *s)).collect(),
        }
    }

    /// Fused candidates, already in the ego frame.
    pub fn from_candidates(frame: u64, ego_pose: &Pose2D, cands: &CandidateSet) -> Self {
        Self {
            frame,
            agent_id: FUSED_AGENT.to_owned(),
            pose: rounded_pose(ego_pose),
            detections: cands.iter().map(|(b, s, _)| DetectionEntry::new(b, s)).collect(),
        }
    }

    /// Ground-truth boxes given in the ego frame; scores are 1.
    pub fn ground_truth(frame: u64, ego_pose: &Pose2D, boxes: &[Box3D]) -> Self {
        Self {
            frame,
            agent_id: GROUND_TRUTH_AGENT.to_owned(),
            pose: rounded_pose(ego_pose),
            detections: boxes.iter().map(|b| DetectionEntry::new(b, 1.0)).collect(),
        }
    }

    fn frame_label(&self) -> FrameId {
        if self.agent_id == FUSED_AGENT || self.agent_id == GROUND_TRUTH_AGENT {
            FrameId::new(EGO_FRAME)
        } else {
            FrameId::new(self.agent_id.as_str())
        }
    }

    pub fn boxes(&self) -> Result<Vec<Box3D>, GeometryError> {
        let frame = self.frame_label();
        self.detections.iter().map(|d| d.to_box(frame.clone())).collect()
    }

    pub fn to_agent_detections(&self) -> Result<AgentDetections, GeometryError> {
        let pose = Pose2D::new(self.pose.x, self.pose.y, self.pose.yaw)?;
        let boxes = self.boxes()?;
        let detections = boxes.into_iter().zip(&self.detections).map(|(b, d)| (b, d.score)).collect();
        Ok(AgentDetections::new(AgentId::new(self.agent_id.as_str()), pose, detections))
    }

    pub fn to_candidates(&self) -> Result<CandidateSet, ExchangeError> {
        let invalid = |message: String| ExchangeError::Invalid {
            frame: self.frame,
            agent: self.agent_id.clone(),
            message,
        };
        let boxes = self.boxes().map_err(|e| invalid(e.to_string()))?;
        let scores = self.detections.iter().map(|d| d.score).collect();
        CandidateSet::from_agent(boxes, scores, &AgentId::new(self.agent_id.as_str())).map_err(|e| invalid(e.to_string()))
    }
}

/// Reads records; blank lines are skipped.
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<DetectionRecord>, ExchangeError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DetectionRecord = serde_json::from_str(&line).map_err(|e| ExchangeError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        // reject malformed boxes up front
        rec.boxes().map_err(|source| ExchangeError::Geometry { line: i + 1, source })?;
        if let Some(d) = rec.detections.iter().find(|d| !(0.0..=1.0).contains(&d.score)) {
            return Err(ExchangeError::Parse {
                line: i + 1,
                message: format!("score {} outside [0, 1]", d.score),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records<W: Write>(mut w: W, records: &[DetectionRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

//! Bounding-box aggregation: Promote-Suppress Aggregation and NMS baselines.
//!
//! All aggregators work on a [`CandidateSet`] in a single frame and return the
//! indices of the selected candidates in ascending order. Ties are resolved by
//! the canonical candidate order (score descending, then box geometry, then
//! index), so results do not depend on how the inputs were ordered.

mod graph;
mod nms;
mod psa;
mod union_find;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::AgentId;
use crate::geometry::{Box3D, FrameId};

pub use graph::{build_graph, build_graph_with_threshold, BoxGraph, IouMatrix};
pub use nms::{nms, nms_on_matrix, soft_nms, soft_nms_indexed, SoftNmsParams};
pub use psa::{psa, psa_on_graph, psa_with_threshold, softmax_scaled};
pub use union_find::UnionFind;

#[derive(Debug, Error, PartialEq)]
pub enum AggregationError {
    #[error("candidate arrays differ in length: {boxes} boxes, {scores} scores, {agents} agents")]
    LengthMismatch { boxes: usize, scores: usize, agents: usize },
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("candidates span several frames (`{0}` and `{1}`)")]
    MixedFrames(FrameId, FrameId),
    #[error("invalid PSA parameters: {0}")]
    InvalidPsaParams(&'static str),
}

/// Soft-selection parameters: softmax temperature `epsilon` and threshold `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsaParams {
    pub epsilon: f64,
    pub phi: f64,
}

impl PsaParams {
    pub fn new(epsilon: f64, phi: f64) -> Result<Self, AggregationError> {
        let p = Self { epsilon, phi };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), AggregationError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(AggregationError::InvalidPsaParams("epsilon must be positive and finite"));
        }
        if !(0.0..1.0).contains(&self.phi) {
            return Err(AggregationError::InvalidPsaParams("phi must lie in [0, 1)"));
        }
        Ok(())
    }
}

impl Default for PsaParams {
    fn default() -> Self {
        Self { epsilon: 0.01, phi: 0.5 }
    }
}

/// Boxes with aligned scores and source agents, all in one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateSet {
    boxes: Vec<Box3D>,
    scores: Vec<f64>,
    source_agent: Vec<AgentId>,
}

impl CandidateSet {
    pub fn new(boxes: Vec<Box3D>, scores: Vec<f64>, source_agent: Vec<AgentId>) -> Result<Self, AggregationError> {
        if boxes.len() != scores.len() || boxes.len() != source_agent.len() {
            return Err(AggregationError::LengthMismatch {
                boxes: boxes.len(),
                scores: scores.len(),
                agents: source_agent.len(),
            });
        }
        if let Some(&s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(AggregationError::ScoreOutOfRange(s));
        }
        if let Some(first) = boxes.first() {
            if let Some(other) = boxes.iter().find(|b| b.frame_id() != first.frame_id()) {
                return Err(AggregationError::MixedFrames(
                    first.frame_id().clone(),
                    other.frame_id().clone(),
                ));
            }
        }
        Ok(Self {
            boxes,
            scores,
            source_agent,
        })
    }

    /// Candidates that all come from one agent.
    pub fn from_agent(boxes: Vec<Box3D>, scores: Vec<f64>, agent: &AgentId) -> Result<Self, AggregationError> {
        let agents = vec![agent.clone(); boxes.len()];
        Self::new(boxes, scores, agents)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn push(&mut self, b: Box3D, score: f64, agent: AgentId) -> Result<(), AggregationError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(AggregationError::ScoreOutOfRange(score));
        }
        if let Some(first) = self.boxes.first() {
            if first.frame_id() != b.frame_id() {
                return Err(AggregationError::MixedFrames(first.frame_id().clone(), b.frame_id().clone()));
            }
        }
        self.boxes.push(b);
        self.scores.push(score);
        self.source_agent.push(agent);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn boxes(&self) -> &[Box3D] {
        &self.boxes
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn source_agents(&self) -> &[AgentId] {
        &self.source_agent
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Box3D, f64, &AgentId)> {
        self.boxes
            .iter()
            .zip(&self.scores)
            .zip(&self.source_agent)
            .map(|((b, &s), a)| (b, s, a))
    }

    /// New set containing the candidates at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            boxes: indices.iter().map(|&i| self.boxes[i].clone()).collect(),
            scores: indices.iter().map(|&i| self.scores[i]).collect(),
            source_agent: indices.iter().map(|&i| self.source_agent[i].clone()).collect(),
        }
    }

    /// Reorders candidates so that position `k` holds the old candidate `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.len());
        self.subset(perm)
    }

    /// Order used for every tie-break: score descending, then box geometry
    /// ascending, then index.
    pub fn canonical_cmp(&self, i: usize, j: usize) -> Ordering {
        self.scores[j]
            .total_cmp(&self.scores[i])
            .then_with(|| self.boxes[i].canonical_cmp(&self.boxes[j]))
            .then(i.cmp(&j))
    }

    pub fn canonical_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&i, &j| self.canonical_cmp(i, j));
        order
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(cx: f64) -> Box3D {
        Box3D::new(cx, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, "f".into()).unwrap()
    }

    #[test]
    fn validation() {
        let a = AgentId::new("a");
        assert!(matches!(
            CandidateSet::new(vec![unit(0.0)], vec![], vec![a.clone()]),
            Err(AggregationError::LengthMismatch { .. })
        ));
        assert!(matches!(
            CandidateSet::from_agent(vec![unit(0.0)], vec![1.5], &a),
            Err(AggregationError::ScoreOutOfRange(_))
        ));
        let other = unit(1.0).with_frame("g".into());
        assert!(matches!(
            CandidateSet::from_agent(vec![unit(0.0), other], vec![0.1, 0.2], &a),
            Err(AggregationError::MixedFrames(..))
        ));
        assert!(PsaParams::new(0.0, 0.5).is_err());
        assert!(PsaParams::new(0.01, 1.0).is_err());
        assert!(PsaParams::new(0.01, 0.0).is_ok());
    }

    #[test]
    fn canonical_order_breaks_ties_by_geometry() {
        let a = AgentId::new("a");
        let c = CandidateSet::from_agent(vec![unit(3.0), unit(1.0), unit(2.0)], vec![0.5, 0.5, 0.9], &a).unwrap();
        assert_eq!(c.canonical_order(), vec![2, 1, 0]);
    }
}

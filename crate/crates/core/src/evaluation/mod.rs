//! Greedy matching, precision-recall curves and Average Precision.

mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::CandidateSet;
use crate::fusion::{AgentId, FusionError, RangeLimits};
use crate::geometry::{Box3D, IouVariant};

pub use report::{
    ablation_report, evaluate_method, ground_truth_in_ego, EvalFrame, standard_methods, write_pr_curve_csv,
    write_reliability_csv, write_report_csv, Method, ReportRow,
};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("no ground-truth boxes to evaluate against")]
    NoGroundTruth,
    #[error("frame {0} has detections but no ground-truth record")]
    MissingFrame(u64),
    #[error("frame {frame}: no detections record for agent `{agent}`")]
    MissingAgent { frame: u64, agent: AgentId },
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub iou_variant: IouVariant,
    pub range: RangeLimits,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.7,
            iou_variant: IouVariant::ThreeD,
            range: RangeLimits::default(),
        }
    }
}

/// Per-detection outcome for one frame, in the detections' input order.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub scores: Vec<f64>,
    pub is_tp: Vec<bool>,
    pub matched_gt: Vec<Option<usize>>,
    pub num_gt: usize,
}

impl MatchResult {
    pub fn tp(&self) -> usize {
        self.is_tp.iter().filter(|&&t| t).count()
    }

    pub fn fp(&self) -> usize {
        self.is_tp.len() - self.tp()
    }

    pub fn false_negatives(&self) -> usize {
        self.num_gt - self.tp()
    }
}

/// Greedy matching: detections in canonical order (score descending), each
/// taking the unmatched ground truth of highest IoU if that IoU reaches
/// `iou_thresh`. IoU ties go to the lower ground-truth index.
///
/// Panics if detections and ground truth live in different frames.
pub fn match_frame(dets: &CandidateSet, gts: &[Box3D], iou_thresh: f64, variant: IouVariant) -> MatchResult {
    let n = dets.len();
    let mut is_tp = vec![false; n];
    let mut matched_gt = vec![None; n];
    let mut taken = vec![false; gts.len()];
    if let (Some(d), Some(g)) = (dets.boxes().first(), gts.first()) {
        assert_eq!(d.frame_id(), g.frame_id(), "detections and ground truth must share a frame");
    }
    for i in dets.canonical_order() {
        let b = &dets.boxes()[i];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let o = variant.compute_unchecked(b, gt);
            if o >= iou_thresh && best.is_none_or(|(_, bo)| o > bo) {
                best = Some((g, o));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            is_tp[i] = true;
            matched_gt[i] = Some(g);
        }
    }
    MatchResult {
        scores: dets.scores().to_vec(),
        is_tp,
        matched_gt,
        num_gt: gts.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    /// `(recall, precision)` after each distinct score threshold, highest first.
    pub points: Vec<(f64, f64)>,
    pub thresholds: Vec<f64>,
    pub ap: f64,
    pub num_gt: usize,
    pub tp: usize,
    pub fp: usize,
}

/// All-points interpolated AP over a global score sweep.
///
/// Detections sharing a score enter the sweep together, so the result does not
/// depend on how ties are ordered. Precision is replaced by its running maximum
/// from the right before the area under the curve is summed.
pub fn average_precision(matches: &[MatchResult]) -> Result<PrCurve, EvaluationError> {
    let num_gt: usize = matches.iter().map(|m| m.num_gt).sum();
    if num_gt == 0 {
        return Err(EvaluationError::NoGroundTruth);
    }
    let mut dets: Vec<(f64, bool)> = matches
        .iter()
        .flat_map(|m| m.scores.iter().copied().zip(m.is_tp.iter().copied()))
        .collect();
    dets.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (mut tp, mut fp) = (0usize, 0usize);
    let mut points = Vec::new();
    let mut thresholds = Vec::new();
    let mut k = 0;
    while k < dets.len() {
        let s = dets[k].0;
        while k < dets.len() && dets[k].0 == s {
            if dets[k].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((tp as f64 / num_gt as f64, tp as f64 / (tp + fp) as f64));
        thresholds.push(s);
    }

    let mut envelope: Vec<f64> = points.iter().map(|p| p.1).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, env) in points.iter().zip(&envelope) {
        ap += (p.0 - prev_recall) * env;
        prev_recall = p.0;
    }
    Ok(PrCurve {
        points,
        thresholds,
        ap,
        num_gt,
        tp,
        fp,
    })
}

/// Keeps only candidates whose center lies inside `range`.
pub fn filter_range(cands: &CandidateSet, range: &RangeLimits) -> CandidateSet {
    let keep: Vec<usize> = (0..cands.len()).filter(|&i| range.contains_box(&cands.boxes()[i])).collect();
    cands.subset(&keep)
}

/// Matches every frame after applying the range filter to both sides.
pub fn match_frames(dets: &[CandidateSet], gts: &[Vec<Box3D>], cfg: &EvalConfig) -> Vec<MatchResult> {
    assert_eq!(dets.len(), gts.len(), "one ground-truth list per frame");
    let pairs: Vec<(&CandidateSet, &Vec<Box3D>)> = dets.iter().zip(gts).collect();
    crate::par::map_slice(&pairs, |(d, g)| {
        let d = filter_range(d, &cfg.range);
        let g: Vec<Box3D> = g.iter().filter(|b| cfg.range.contains_box(b)).cloned().collect();
        match_frame(&d, &g, cfg.iou_threshold, cfg.iou_variant)
    })
}

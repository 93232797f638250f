use std::collections::BTreeMap;
use std::io::Write;

use super::{average_precision, match_frames, EvalConfig, EvaluationError, PrCurve};
use crate::aggregation::CandidateSet;
use crate::calibration::{Calibrator, ReliabilityDiagram};
use crate::fusion::{fuse, Aggregator, AgentDetections, AgentId, FusionConfig, Pose2D, EGO_FRAME};
use crate::geometry::{Box3D, FrameId};
use crate::numfmt::fmt_sig9;
use crate::par;
use crate::simulation::FrameData;

/// One row of an ablation: which agents take part, whether their calibrators
/// are applied, and the fusion settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Method {
    pub name: String,
    pub fusion: FusionConfig,
    pub calibrated: bool,
    /// False means the ego vehicle's detections only.
    pub cooperative: bool,
}

impl Method {
    pub fn new(name: &str, aggregator: Aggregator, calibrated: bool, cooperative: bool, base: &FusionConfig) -> Self {
        Self {
            name: name.to_owned(),
            fusion: FusionConfig { aggregator, ..*base },
            calibrated,
            cooperative,
        }
    }
}

/// The five standard rows: no fusion, NMS and PSA each with and without
/// per-agent calibration.
pub fn standard_methods(base: &FusionConfig) -> Vec<Method> {
    vec![
        Method::new("no_fusion", Aggregator::Nms, false, false, base),
        Method::new("nms", Aggregator::Nms, false, true, base),
        Method::new("nms+dbs", Aggregator::Nms, true, true, base),
        Method::new("psa", Aggregator::Psa, false, true, base),
        Method::new("psa+dbs", Aggregator::Psa, true, true, base),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub curve: PrCurve,
}

impl ReportRow {
    pub fn ap(&self) -> f64 {
        self.curve.ap
    }
}

/// World-frame ground truth expressed in the ego frame.
pub fn ground_truth_in_ego(frame: &FrameData, ego_pose: &Pose2D) -> Vec<Box3D> {
    frame
        .ground_truth
        .iter()
        .map(|g| {
            Pose2D::identity()
                .transform_box(g, ego_pose, FrameId::new(EGO_FRAME))
                .expect("finite pose")
        })
        .collect()
}

/// One frame as seen by the evaluator: every agent's raw output and the
/// ground truth in the ego frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalFrame {
    pub frame: u64,
    pub ground_truth: Vec<Box3D>,
    pub agents: Vec<AgentDetections>,
}

impl EvalFrame {
    pub fn from_simulated(frame: &FrameData, ego: &AgentId) -> Self {
        let ego_pose = frame.agent(ego).map(|a| a.detections.pose).unwrap_or_default();
        Self {
            frame: frame.frame,
            ground_truth: ground_truth_in_ego(frame, &ego_pose),
            agents: frame.agents.iter().map(|a| a.detections.clone()).collect(),
        }
    }
}

fn split<'a>(frame: &'a EvalFrame, ego: &AgentId) -> Result<(&'a AgentDetections, Vec<AgentDetections>), EvaluationError> {
    let ego_dets = frame
        .agents
        .iter()
        .find(|a| &a.agent_id == ego)
        .ok_or(EvaluationError::MissingAgent {
            frame: frame.frame,
            agent: ego.clone(),
        })?;
    let others = frame.agents.iter().filter(|a| &a.agent_id != ego).cloned().collect();
    Ok((ego_dets, others))
}

/// Fused output of `method` for every frame.
pub fn evaluate_method(
    frames: &[EvalFrame],
    ego: &AgentId,
    method: &Method,
    calibrators: &BTreeMap<AgentId, Calibrator>,
) -> Result<Vec<CandidateSet>, EvaluationError> {
    let identity: BTreeMap<AgentId, Calibrator>;
    let cals = if method.calibrated {
        calibrators
    } else {
        identity = frames
            .iter()
            .flat_map(|f| f.agents.iter().map(|a| (AgentId::new(a.calibrator_ref.as_str()), Calibrator::identity())))
            .collect();
        &identity
    };
    par::map_slice(frames, |f| {
        let (ego_dets, others) = split(f, ego)?;
        let others = if method.cooperative { others } else { Vec::new() };
        Ok(fuse(ego_dets, &others, cals, &method.fusion)?)
    })
    .into_iter()
    .collect()
}

/// AP of every method on the same frames, in the order given.
pub fn ablation_report(
    frames: &[EvalFrame],
    ego: &AgentId,
    methods: &[Method],
    calibrators: &BTreeMap<AgentId, Calibrator>,
    eval: &EvalConfig,
) -> Result<Vec<ReportRow>, EvaluationError> {
    let gts: Vec<Vec<Box3D>> = frames.iter().map(|f| f.ground_truth.clone()).collect();
    methods
        .iter()
        .map(|m| {
            let fused = evaluate_method(frames, ego, m, calibrators)?;
            let curve = average_precision(&match_frames(&fused, &gts, eval))?;
            Ok(ReportRow {
                method: m.name.clone(),
                curve,
            })
        })
        .collect()
}

/// `method,ap,tp,fp,fn` table preceded by `#` lines with the evaluation
/// settings.
pub fn write_report_csv<W: Write>(mut w: W, rows: &[ReportRow], eval: &EvalConfig) -> std::io::Result<()> {
    writeln!(w, "# iou_variant={} iou_threshold={}", eval.iou_variant, fmt_sig9(eval.iou_threshold))?;
    let r = &eval.range;
    writeln!(
        w,
        "# range x=[{},{}] y=[{},{}]",
        fmt_sig9(r.x_min),
        fmt_sig9(r.x_max),
        fmt_sig9(r.y_min),
        fmt_sig9(r.y_max)
    )?;
    writeln!(w, "method,ap,tp,fp,fn")?;
    for row in rows {
        let c = &row.curve;
        writeln!(w, "{},{},{},{},{}", row.method, fmt_sig9(c.ap), c.tp, c.fp, c.num_gt - c.tp)?;
    }
    Ok(())
}

pub fn write_pr_curve_csv<W: Write>(mut w: W, curve: &PrCurve) -> std::io::Result<()> {
    writeln!(w, "threshold,recall,precision")?;
    for (t, (r, p)) in curve.thresholds.iter().zip(&curve.points) {
        writeln!(w, "{},{},{}", fmt_sig9(*t), fmt_sig9(*r), fmt_sig9(*p))?;
    }
    Ok(())
}

pub fn write_reliability_csv<W: Write>(mut w: W, diagram: &ReliabilityDiagram) -> std::io::Result<()> {
    writeln!(w, "# ece={}", fmt_sig9(diagram.ece))?;
    writeln!(w, "bin_low,bin_high,count,confidence,accuracy")?;
    for i in 0..diagram.num_bins() {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_sig9(diagram.bin_edges[i]),
            fmt_sig9(diagram.bin_edges[i + 1]),
            diagram.bin_count[i],
            fmt_sig9(diagram.bin_confidence[i]),
            fmt_sig9(diagram.bin_accuracy[i])
        )?;
    }
    Ok(())
}

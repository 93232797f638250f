use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal, Poisson};

use super::rng::{stream, StreamKind};
use super::{AgentSpec, FrameData, Scenario, SimulatedAgentFrame, SimulationError, WORLD_FRAME};
use crate::aggregation::CandidateSet;
use crate::calibration::{dbs_inverse, CalibrationSample};
use crate::evaluation::match_frame;
use crate::fusion::{AgentDetections, AgentId, Pose2D};
use crate::geometry::{iou_3d_unchecked, Box3D, FrameId, IouVariant};
use crate::par;

/// IoU at which a proposal counts as correct.
pub const CALIBRATION_IOU: f64 = 0.7;

// Correct boxes are kept a little above, incorrect ones well below the
// threshold, so 9-digit rounding in the exchange files cannot flip a label.
const CORRECT_MIN_IOU: f64 = 0.72;
const INCORRECT_MAX_IOU: f64 = 0.65;
const MAX_TRIES: usize = 64;

fn sample_vehicle(rng: &mut ChaCha8Rng, cx: f64, cy: f64) -> Box3D {
    let l = 4.5 * rng.random_range(0.9..1.1);
    let w = 2.0 * rng.random_range(0.9..1.1);
    let h = 1.6 * rng.random_range(0.9..1.1);
    let yaw = rng.random_range(-PI..PI);
    Box3D::new(cx, cy, h / 2.0, l, w, h, yaw, FrameId::new(WORLD_FRAME)).expect("positive sampled extents")
}

fn scene(s: &Scenario, kind: StreamKind, frame: u64) -> Vec<Box3D> {
    let mut rng = stream(s.seed, kind, frame, "");
    let mut boxes = s.fixed_vehicles().expect("validated scenario");
    let fixed = boxes.len();
    let a = &s.area;
    let mut attempts = 0;
    while boxes.len() < fixed + s.vehicles_per_frame && attempts < 100 * s.vehicles_per_frame.max(1) {
        attempts += 1;
        let (x, y) = (rng.random_range(a.x_min..a.x_max), rng.random_range(a.y_min..a.y_max));
        let far = boxes
            .iter()
            .all(|b| (b.cx() - x).hypot(b.cy() - y) >= s.min_vehicle_gap);
        let candidate = sample_vehicle(&mut rng, x, y);
        if far && boxes.iter().all(|b| iou_3d_unchecked(b, &candidate) < 0.3) {
            boxes.push(candidate);
        }
    }
    boxes
}

/// Draws a correctness probability with mean `q`.
fn draw_probability(rng: &mut ChaCha8Rng, q: f64, concentration: f64) -> f64 {
    if q >= 1.0 {
        return 1.0;
    }
    if q <= 0.0 {
        return 0.0;
    }
    Beta::new(concentration * q, concentration * (1.0 - q))
        .expect("positive beta shape")
        .sample(rng)
}

struct Noise {
    pos: f64,
    yaw: f64,
    size: f64,
}

impl Noise {
    fn perturb(&self, rng: &mut ChaCha8Rng, gt: &Box3D, dx: f64, dy: f64, scale: f64) -> Box3D {
        let n = |rng: &mut ChaCha8Rng, sd: f64| {
            if sd * scale > 0.0 {
                Normal::new(0.0, sd * scale).unwrap().sample(rng)
            } else {
                0.0
            }
        };
        let cx = gt.cx() + dx + n(rng, self.pos);
        let cy = gt.cy() + dy + n(rng, self.pos);
        let cz = gt.cz() + n(rng, self.pos * 0.5);
        let yaw = gt.yaw() + n(rng, self.yaw);
        let mut dim = |v: f64| v * (1.0 + n(rng, self.size)).clamp(0.5, 1.5);
        let (l, w, h) = (dim(gt.length()), dim(gt.width()), dim(gt.height()));
        Box3D::new(cx, cy, cz, l, w, h, yaw, gt.frame_id().clone()).expect("clamped extents stay positive")
    }

    /// A box with IoU >= 0.72 to `gt`; the noise shrinks if it keeps failing.
    fn correct_box(&self, rng: &mut ChaCha8Rng, gt: &Box3D) -> Box3D {
        let mut scale = 1.0;
        for t in 0..MAX_TRIES {
            if t > 0 && t % 16 == 0 {
                scale *= 0.5;
            }
            let b = self.perturb(rng, gt, 0.0, 0.0, scale);
            if iou_3d_unchecked(&b, gt) >= CORRECT_MIN_IOU {
                return b;
            }
        }
        gt.clone()
    }

    /// A box overlapping `gt` but below 0.65 IoU with every vehicle.
    fn mislocalized_box(&self, rng: &mut ChaCha8Rng, gt: &Box3D, all: &[Box3D], offset: [f64; 2]) -> Box3D {
        let ok = |b: &Box3D| iou_3d_unchecked(b, gt) > 0.0 && all.iter().all(|g| iou_3d_unchecked(b, g) < INCORRECT_MAX_IOU);
        for _ in 0..MAX_TRIES {
            let theta = rng.random_range(-PI..PI);
            let m = rng.random_range(offset[0]..=offset[1]);
            let b = self.perturb(rng, gt, m * theta.cos(), m * theta.sin(), 1.0);
            if ok(&b) {
                return b;
            }
        }
        // shift by 45% of the length along the heading: IoU about 0.38
        let (s, c) = gt.yaw().sin_cos();
        let d = 0.45 * gt.length();
        let b = gt
            .with_pose(gt.cx() + d * c, gt.cy() + d * s, gt.cz(), gt.yaw(), gt.frame_id().clone())
            .expect("finite shift");
        debug_assert!(ok(&b));
        b
    }
}

fn clutter_box(rng: &mut ChaCha8Rng, s: &Scenario, agent: &AgentSpec, gts: &[Box3D]) -> Option<Box3D> {
    let a = &s.area;
    let r = agent.profile.max_range;
    let (x_lo, x_hi) = ((agent.pose.x - r).max(a.x_min), (agent.pose.x + r).min(a.x_max));
    let (y_lo, y_hi) = ((agent.pose.y - r).max(a.y_min), (agent.pose.y + r).min(a.y_max));
    if !(x_lo < x_hi && y_lo < y_hi) {
        return None;
    }
    for _ in 0..MAX_TRIES {
        let (x, y) = (rng.random_range(x_lo..x_hi), rng.random_range(y_lo..y_hi));
        if (x - agent.pose.x).hypot(y - agent.pose.y) > r {
            continue;
        }
        let b = sample_vehicle(rng, x, y);
        if gts.iter().all(|g| iou_3d_unchecked(&b, g) == 0.0) {
            return Some(b);
        }
    }
    None
}

fn agent_frame(s: &Scenario, agent: &AgentSpec, kind: StreamKind, frame: u64, gts: &[Box3D]) -> SimulatedAgentFrame {
    let mut rng = stream(s.seed, kind, frame, agent.id.as_str());
    let p = &agent.profile;
    let conf = &p.confidence_model;
    let noise = Noise {
        pos: p.position_noise_std,
        yaw: p.yaw_noise_std,
        size: p.size_noise_std,
    };
    let distance = |g: &Box3D| (g.cx() - agent.pose.x).hypot(g.cy() - agent.pose.y);

    let mut claimed = vec![false; gts.len()];
    let mut world: Vec<(Box3D, f64, bool)> = Vec::new();
    for (gi, g) in gts.iter().enumerate() {
        let d = distance(g);
        if d > p.max_range || rng.random::<f64>() >= p.recall_curve.eval(d) {
            continue;
        }
        let prob = draw_probability(&mut rng, conf.base_quality, conf.concentration);
        if rng.random::<f64>() < prob {
            claimed[gi] = true;
            world.push((noise.correct_box(&mut rng, g), prob, true));
        } else {
            world.push((noise.mislocalized_box(&mut rng, g, gts, p.mislocalization), prob, false));
        }
    }

    let clutter = if p.false_positive_rate > 0.0 {
        Poisson::new(p.false_positive_rate).unwrap().sample(&mut rng) as usize
    } else {
        0
    };
    for _ in 0..clutter {
        let prob = draw_probability(&mut rng, conf.clutter_quality, conf.concentration);
        if rng.random::<f64>() < prob {
            // a correct clutter proposal lands on a vehicle this agent has not
            // found yet; if there is none it is emitted as an incorrect box
            let free: Vec<usize> = (0..gts.len())
                .filter(|&i| !claimed[i] && distance(&gts[i]) <= p.max_range)
                .collect();
            if !free.is_empty() {
                let gi = free[rng.random_range(0..free.len())];
                claimed[gi] = true;
                world.push((noise.correct_box(&mut rng, &gts[gi]), prob, true));
                continue;
            }
        }
        if let Some(b) = clutter_box(&mut rng, s, agent, gts) {
            world.push((b, prob, false));
        }
    }

    let m = conf.miscalibration;
    let frame_id = FrameId::new(agent.id.as_str());
    let world_pose = Pose2D::identity();
    let mut detections = Vec::with_capacity(world.len());
    let mut correct = Vec::with_capacity(world.len());
    for (b, prob, y) in world {
        let local = world_pose
            .transform_box(&b, &agent.pose, frame_id.clone())
            .expect("finite pose");
        detections.push((local, dbs_inverse(prob, m.a, m.b).clamp(0.0, 1.0)));
        correct.push(y);
    }
    SimulatedAgentFrame {
        detections: AgentDetections::new(agent.id.clone(), agent.pose, detections),
        correct,
    }
}

fn frames(s: &Scenario, scene_kind: StreamKind, agent_kind: StreamKind, count: usize) -> Vec<FrameData> {
    let mut agents: Vec<&AgentSpec> = s.agents.iter().collect();
    agents.sort_by(|a, b| a.id.cmp(&b.id));
    par::map_range(count, |f| {
        let frame = f as u64;
        let gts = scene(s, scene_kind, frame);
        let agents = agents
            .iter()
            .map(|a| agent_frame(s, a, agent_kind, frame, &gts))
            .collect();
        FrameData {
            frame,
            ground_truth: gts,
            agents,
        }
    })
}

/// Evaluation frames `0..frames`, ordered by frame with agents sorted by id.
pub fn generate(s: &Scenario) -> Result<Vec<FrameData>, SimulationError> {
    s.validate()?;
    Ok(frames(s, StreamKind::Scene, StreamKind::Agent, s.frames))
}

/// Calibration frames, drawn from streams disjoint from [`generate`].
pub fn generate_calibration_frames(s: &Scenario) -> Result<Vec<FrameData>, SimulationError> {
    s.validate()?;
    Ok(frames(
        s,
        StreamKind::CalibrationScene,
        StreamKind::CalibrationAgent,
        s.calibration_frames,
    ))
}

/// Labels an agent's detections against ground truth in its own frame with
/// greedy matching at IoU 0.7.
pub fn label_agent_frame(frame: &FrameData, agent: &SimulatedAgentFrame) -> Vec<CalibrationSample> {
    let d = &agent.detections;
    let frame_id = FrameId::new(d.agent_id.as_str());
    let gts: Vec<Box3D> = frame
        .ground_truth
        .iter()
        .map(|g| Pose2D::identity().transform_box(g, &d.pose, frame_id.clone()).expect("finite pose"))
        .collect();
    let cands = CandidateSet::from_agent(
        d.detections.iter().map(|(b, _)| b.clone()).collect(),
        d.detections.iter().map(|(_, s)| *s).collect(),
        &d.agent_id,
    )
    .expect("simulated scores lie in [0, 1]");
    let m = match_frame(&cands, &gts, CALIBRATION_IOU, IouVariant::ThreeD);
    d.detections
        .iter()
        .zip(&m.is_tp)
        .map(|((_, s), &tp)| CalibrationSample::new(*s, tp).expect("score in [0, 1]"))
        .collect()
}

/// Labelled `(raw score, correct)` samples for one agent from the calibration
/// frames.
pub fn make_calibration_split(s: &Scenario, agent_id: &AgentId) -> Result<Vec<CalibrationSample>, SimulationError> {
    if s.agent(agent_id).is_none() {
        return Err(SimulationError::UnknownAgent(agent_id.clone()));
    }
    let cal = generate_calibration_frames(s)?;
    Ok(cal
        .iter()
        .flat_map(|f| label_agent_frame(f, f.agent(agent_id).expect("every agent present")))
        .collect())
}

/// Calibration samples for every agent, generating the calibration frames once.
pub fn make_calibration_splits(s: &Scenario) -> Result<BTreeMap<AgentId, Vec<CalibrationSample>>, SimulationError> {
    let cal = generate_calibration_frames(s)?;
    let mut out: BTreeMap<AgentId, Vec<CalibrationSample>> = s.agents.iter().map(|a| (a.id.clone(), Vec::new())).collect();
    for f in &cal {
        for a in &f.agents {
            out.get_mut(&a.detections.agent_id)
                .expect("every agent present")
                .extend(label_agent_frame(f, a));
        }
    }
    Ok(out)
}

//! Synthetic scenes with heterogeneous, deliberately miscalibrated detectors.
//!
//! Each frame places vehicles in the evaluation area. Every agent then proposes
//! boxes for the vehicles it sees (and some clutter). A proposal first draws a
//! correctness probability `p ~ Beta(k q, k (1 - q))` from the agent's
//! confidence model, then a label `y ~ Bernoulli(p)`: correct proposals are
//! boxes with IoU >= 0.7 to their vehicle, incorrect ones are mislocalized or
//! placed in empty space. The emitted raw score is `dbs_inverse(p; a, b)`, so
//! the agent's true calibrator is DBS with the profile's `(a, b)` by
//! construction. Random streams are documented in [`rng`].

mod generate;
pub mod rng;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{AgentDetections, AgentId, Pose2D, RangeLimits};
use crate::geometry::{iou_3d_unchecked, Box3D, FrameId, GeometryError};

pub use generate::{
    generate, generate_calibration_frames, label_agent_frame, make_calibration_split, make_calibration_splits,
    CALIBRATION_IOU,
};

/// Frame label of simulated ground truth.
pub const WORLD_FRAME: &str = "world";

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("unknown agent `{0}`")]
    UnknownAgent(AgentId),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("scenario config: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, SimulationError> {
    Err(SimulationError::InvalidScenario(msg.into()))
}

/// Detection probability against distance, linearly interpolated between
/// `(meters, probability)` knots and held constant outside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct RecallCurve {
    knots: Vec<[f64; 2]>,
}

impl RecallCurve {
    pub fn new(knots: Vec<[f64; 2]>) -> Result<Self, SimulationError> {
        if knots.is_empty() {
            return invalid("recall curve needs at least one knot");
        }
        if knots.iter().any(|k| !k[0].is_finite() || !(0.0..=1.0).contains(&k[1])) {
            return invalid("recall knots must be finite with probabilities in [0, 1]");
        }
        if knots.windows(2).any(|w| w[1][0] <= w[0][0]) {
            return invalid("recall knot distances must be strictly increasing");
        }
        Ok(Self { knots })
    }

    pub fn constant(p: f64) -> Self {
        Self::new(vec![[0.0, p]]).expect("constant recall in [0, 1]")
    }

    pub fn knots(&self) -> &[[f64; 2]] {
        &self.knots
    }

    pub fn eval(&self, distance: f64) -> f64 {
        let k = &self.knots;
        if distance <= k[0][0] {
            return k[0][1];
        }
        for w in k.windows(2) {
            let ([d0, p0], [d1, p1]) = (w[0], w[1]);
            if distance <= d1 {
                return p0 + (p1 - p0) * (distance - d0) / (d1 - d0);
            }
        }
        k[k.len() - 1][1]
    }
}

impl TryFrom<Vec<[f64; 2]>> for RecallCurve {
    type Error = SimulationError;

    fn try_from(v: Vec<[f64; 2]>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<RecallCurve> for Vec<[f64; 2]> {
    fn from(c: RecallCurve) -> Self {
        c.knots
    }
}

/// Parameters `(a, b)` of the DBS map from emitted score back to correctness
/// probability. `(1, 1)` is a calibrated detector; `a > 1` or `b < 1` is
/// over-confident.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Miscalibration {
    pub a: f64,
    pub b: f64,
}

impl Default for Miscalibration {
    fn default() -> Self {
        Self { a: 1.0, b: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceModel {
    /// Mean correctness probability of proposals on real vehicles.
    pub base_quality: f64,
    /// Mean correctness probability of clutter proposals.
    #[serde(default = "default_clutter_quality")]
    pub clutter_quality: f64,
    /// Beta concentration; larger means less spread around the mean.
    #[serde(default = "default_concentration")]
    pub concentration: f64,
    #[serde(default)]
    pub miscalibration: Miscalibration,
}

fn default_clutter_quality() -> f64 {
    0.1
}

fn default_concentration() -> f64 {
    5.0
}

fn default_mislocalization() -> [f64; 2] {
    [0.5, 1.5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorProfile {
    pub recall_curve: RecallCurve,
    /// Meters, per axis.
    pub position_noise_std: f64,
    /// Radians.
    pub yaw_noise_std: f64,
    /// Relative, per dimension.
    pub size_noise_std: f64,
    /// Expected clutter proposals per frame.
    pub false_positive_rate: f64,
    pub confidence_model: ConfidenceModel,
    /// Meters from the agent; nothing beyond is detected.
    pub max_range: f64,
    /// Center offset range (meters) of incorrect proposals on real vehicles.
    #[serde(default = "default_mislocalization")]
    pub mislocalization: [f64; 2],
}

impl DetectorProfile {
    pub fn validate(&self) -> Result<(), SimulationError> {
        let nonneg = [
            self.position_noise_std,
            self.yaw_noise_std,
            self.size_noise_std,
            self.false_positive_rate,
            self.max_range,
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return invalid("noise parameters, false_positive_rate and max_range must be finite and >= 0");
        }
        if self.size_noise_std >= 0.5 {
            return invalid("size_noise_std must be below 0.5");
        }
        let c = &self.confidence_model;
        if !(c.base_quality > 0.0 && c.base_quality <= 1.0) {
            return invalid("base_quality must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&c.clutter_quality) {
            return invalid("clutter_quality must lie in [0, 1]");
        }
        if !(c.concentration > 0.0 && c.concentration.is_finite()) {
            return invalid("concentration must be positive");
        }
        let m = &c.miscalibration;
        if !(m.a > 0.0 && m.b > 0.0 && m.a.is_finite() && m.b.is_finite()) {
            return invalid("miscalibration a, b must be positive");
        }
        let [lo, hi] = self.mislocalization;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return invalid("mislocalization must satisfy 0 < min <= max");
        }
        Ok(())
    }

    /// Mid-range LiDAR detector of good quality.
    pub fn reference() -> Self {
        Self {
            recall_curve: RecallCurve::new(vec![[0.0, 0.95], [40.0, 0.9], [70.0, 0.6], [80.0, 0.0]]).unwrap(),
            position_noise_std: 0.15,
            yaw_noise_std: 0.03,
            size_noise_std: 0.03,
            false_positive_rate: 1.0,
            confidence_model: ConfidenceModel {
                base_quality: 0.85,
                clutter_quality: 0.1,
                concentration: 6.0,
                miscalibration: Miscalibration { a: 1.0, b: 1.0 },
            },
            max_range: 80.0,
            mislocalization: default_mislocalization(),
        }
    }

    /// Reference profile with a weak, strongly over-confident confidence head.
    pub fn overconfident() -> Self {
        let mut p = Self::reference();
        p.confidence_model = ConfidenceModel {
            base_quality: 0.4,
            clutter_quality: 0.1,
            concentration: 4.0,
            miscalibration: Miscalibration { a: 3.0, b: 0.5 },
        };
        p
    }

    /// Over-confident and also noisier with lower recall.
    pub fn inferior() -> Self {
        let mut p = Self::overconfident();
        p.recall_curve = RecallCurve::new(vec![[0.0, 0.85], [40.0, 0.75], [60.0, 0.4], [70.0, 0.0]]).unwrap();
        p.position_noise_std = 0.25;
        p.yaw_noise_std = 0.06;
        p.size_noise_std = 0.05;
        p.false_positive_rate = 2.0;
        p.max_range = 70.0;
        p
    }
}

/// A vehicle that appears in every frame, in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub yaw: f64,
}

impl VehicleSpec {
    pub fn to_box(&self) -> Result<Box3D, GeometryError> {
        Box3D::new(
            self.cx,
            self.cy,
            self.cz,
            self.length,
            self.width,
            self.height,
            self.yaw,
            FrameId::new(WORLD_FRAME),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: AgentId,
    pub pose: Pose2D,
    pub profile: DetectorProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Homo,
    Hetero1,
    Hetero2,
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "homo" => Ok(Preset::Homo),
            "hetero1" => Ok(Preset::Hetero1),
            "hetero2" => Ok(Preset::Hetero2),
            other => Err(format!("unknown preset `{other}` (expected homo, hetero1 or hetero2)")),
        }
    }
}

fn default_calibration_frames() -> usize {
    1000
}

fn default_vehicles() -> usize {
    40
}

fn default_gap() -> f64 {
    10.0
}

fn default_ego() -> AgentId {
    AgentId::new("ego")
}

/// Scene and agent definition. `seed` is required in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    /// Evaluation frames.
    pub frames: usize,
    /// Frames of the disjoint calibration split.
    #[serde(default = "default_calibration_frames")]
    pub calibration_frames: usize,
    /// Randomly placed vehicles per frame, on top of `ground_truth`.
    #[serde(default = "default_vehicles")]
    pub vehicles_per_frame: usize,
    /// Minimum center distance between vehicles, meters.
    #[serde(default = "default_gap")]
    pub min_vehicle_gap: f64,
    #[serde(default)]
    pub area: RangeLimits,
    #[serde(default = "default_ego")]
    pub ego: AgentId,
    /// Vehicles present in every frame.
    #[serde(default)]
    pub ground_truth: Vec<VehicleSpec>,
    pub agents: Vec<AgentSpec>,
}

impl Scenario {
    /// Three agents on a straight road: `ego` at the origin, `cav1` 40 m ahead
    /// in the opposite lane facing back, `cav2` 40 m behind facing forward.
    pub fn preset(preset: Preset, seed: u64, frames: usize) -> Self {
        let good = DetectorProfile::reference();
        let cav2 = match preset {
            Preset::Homo => good.clone(),
            Preset::Hetero1 => DetectorProfile::overconfident(),
            Preset::Hetero2 => DetectorProfile::inferior(),
        };
        let agent = |id: &str, x: f64, y: f64, yaw: f64, profile: DetectorProfile| AgentSpec {
            id: AgentId::new(id),
            pose: Pose2D::new(x, y, yaw).unwrap(),
            profile,
        };
        Self {
            seed,
            frames,
            calibration_frames: default_calibration_frames(),
            vehicles_per_frame: default_vehicles(),
            min_vehicle_gap: default_gap(),
            area: RangeLimits::default(),
            ego: default_ego(),
            ground_truth: Vec::new(),
            agents: vec![
                agent("ego", 0.0, 0.0, 0.0, good.clone()),
                agent("cav1", 40.0, 3.5, std::f64::consts::PI, good),
                agent("cav2", -40.0, -3.5, 0.0, cav2),
            ],
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, SimulationError> {
        let s: Self = toml::from_str(text).map_err(|e| SimulationError::Config(e.message().to_owned()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        if self.frames == 0 {
            return invalid("frames must be positive");
        }
        if self.agents.is_empty() {
            return invalid("at least one agent is required");
        }
        let ids: BTreeSet<&AgentId> = self.agents.iter().map(|a| &a.id).collect();
        if ids.len() != self.agents.len() {
            return invalid("agent ids must be unique");
        }
        if !ids.contains(&self.ego) {
            return invalid(format!("ego agent `{}` is not among the agents", self.ego));
        }
        for a in &self.agents {
            a.profile
                .validate()
                .map_err(|e| SimulationError::InvalidScenario(format!("agent `{}`: {e}", a.id)))?;
        }
        let r = &self.area;
        if !(r.x_min < r.x_max && r.y_min < r.y_max) {
            return invalid("area limits must satisfy min < max");
        }
        if self.min_vehicle_gap.is_nan() || self.min_vehicle_gap < 0.0 {
            return invalid("min_vehicle_gap must be >= 0");
        }
        let fixed = self.fixed_vehicles()?;
        for i in 0..fixed.len() {
            for j in (i + 1)..fixed.len() {
                if iou_3d_unchecked(&fixed[i], &fixed[j]) >= 0.3 {
                    return invalid(format!("ground-truth vehicles {i} and {j} overlap (IoU >= 0.3)"));
                }
            }
        }
        Ok(())
    }

    pub fn fixed_vehicles(&self) -> Result<Vec<Box3D>, SimulationError> {
        Ok(self.ground_truth.iter().map(|v| v.to_box()).collect::<Result<_, _>>()?)
    }

    pub fn agent(&self, id: &AgentId) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| &a.id == id)
    }

    pub fn ego_pose(&self) -> Pose2D {
        self.agent(&self.ego).map(|a| a.pose).unwrap_or_default()
    }
}

/// One agent's output for one frame, with the generator's correctness labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedAgentFrame {
    pub detections: AgentDetections,
    /// Whether each detection was generated as a true positive.
    pub correct: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameData {
    pub frame: u64,
    /// World-frame vehicles.
    pub ground_truth: Vec<Box3D>,
    /// Sorted by agent id.
    pub agents: Vec<SimulatedAgentFrame>,
}

impl FrameData {
    pub fn agent(&self, id: &AgentId) -> Option<&SimulatedAgentFrame> {
        self.agents.iter().find(|a| &a.detections.agent_id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recall_curve_interpolates() {
        let c = RecallCurve::new(vec![[0.0, 1.0], [10.0, 0.5], [20.0, 0.0]]).unwrap();
        assert_eq!(c.eval(-1.0), 1.0);
        assert!((c.eval(5.0) - 0.75).abs() < 1e-12);
        assert!((c.eval(15.0) - 0.25).abs() < 1e-12);
        assert_eq!(c.eval(50.0), 0.0);
        assert!(RecallCurve::new(vec![[1.0, 0.5], [1.0, 0.4]]).is_err());
        assert!(RecallCurve::new(vec![[1.0, 1.5]]).is_err());
    }

    #[test]
    fn presets_validate_and_round_trip() {
        for p in [Preset::Homo, Preset::Hetero1, Preset::Hetero2] {
            let s = Scenario::preset(p, 3, 10);
            s.validate().unwrap();
            assert_eq!(Scenario::from_toml(&s.to_toml()).unwrap(), s);
        }
        let homo = Scenario::preset(Preset::Homo, 1, 1);
        assert!(homo.agents.windows(2).all(|w| w[0].profile == w[1].profile));
        let h1 = Scenario::preset(Preset::Hetero1, 1, 1);
        let (good, bad) = (&h1.agents[0].profile, &h1.agents[2].profile);
        assert_ne!(good.confidence_model, bad.confidence_model);
        assert_eq!(good.recall_curve, bad.recall_curve);
        assert_eq!(good.position_noise_std, bad.position_noise_std);
        let h2 = Scenario::preset(Preset::Hetero2, 1, 1);
        assert_ne!(h2.agents[0].profile.recall_curve, h2.agents[2].profile.recall_curve);
    }

    #[test]
    fn missing_seed_is_named() {
        let s = Scenario::preset(Preset::Homo, 3, 10).to_toml();
        let without: String = s.lines().filter(|l| !l.starts_with("seed")).collect::<Vec<_>>().join("\n");
        let err = Scenario::from_toml(&without).unwrap_err().to_string();
        assert!(err.contains("seed"), "{err}");
    }

    #[test]
    fn validation_errors() {
        let mut s = Scenario::preset(Preset::Homo, 3, 10);
        s.ego = AgentId::new("nobody");
        assert!(s.validate().is_err());
        let mut s = Scenario::preset(Preset::Homo, 3, 10);
        s.agents[1].profile.confidence_model.miscalibration.a = 0.0;
        assert!(s.validate().is_err());
        let mut s = Scenario::preset(Preset::Homo, 3, 10);
        let v = VehicleSpec {
            cx: 0.0,
            cy: 0.0,
            cz: 0.8,
            length: 4.5,
            width: 2.0,
            height: 1.6,
            yaw: 0.0,
        };
        s.ground_truth = vec![v, VehicleSpec { cx: 0.2, ..v }];
        assert!(s.validate().is_err());
    }
}

//! Scaling-based confidence calibration.
//!
//! A [`Calibrator`] maps a raw detector confidence `s̃ ∈ [0, 1]` to a calibrated
//! score. Three parametric families are supported:
//!
//! - Doubly Bounded Scaling, the Kumaraswamy CDF `1 − (1 − s̃^a)^b` with
//!   `a, b > 0`. It fixes 0 and 1 and contains the identity (`a = b = 1`).
//! - Platt scaling, `σ(a·s̃ + b)` with `a ≥ 0`.
//! - Temperature scaling, Platt with `b = 0`.
//!
//! Parameters are fitted by full-batch gradient descent on binary cross-entropy
//! (see [`fit`]). Positivity is enforced by optimizing logarithms of the
//! constrained parameters.

mod fit;
pub mod io;
mod reliability;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fit::{fit, FitOptions, FitStats, Fitted, Objective};
pub use reliability::{expected_calibration_error, reliability, ReliabilityDiagram, DEFAULT_NUM_BINS};

/// Scores are clamped to `[SCORE_CLAMP, 1 − SCORE_CLAMP]` before logarithms.
pub const SCORE_CLAMP: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("calibration dataset is empty")]
    EmptyDataset,
    #[error("calibration dataset contains only {0} labels; need both classes")]
    DegenerateDataset(&'static str),
    #[error("loss or gradient became non-finite at iteration {iteration}; reduce the step size")]
    NonFinite { iteration: usize },
    #[error("invalid {kind} parameters a={a}, b={b}: {reason}")]
    InvalidParameters {
        kind: CalibratorKind,
        a: f64,
        b: f64,
        reason: &'static str,
    },
    #[error("raw score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("number of bins must be at least 1")]
    NoBins,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One `(s̃, y)` pair of a calibration set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample {
    pub raw_score: f64,
    pub label: bool,
}

impl CalibrationSample {
    pub fn new(raw_score: f64, label: bool) -> Result<Self, CalibrationError> {
        if !(0.0..=1.0).contains(&raw_score) {
            return Err(CalibrationError::ScoreOutOfRange(raw_score));
        }
        Ok(Self { raw_score, label })
    }

    pub fn target(&self) -> f64 {
        if self.label {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibratorKind {
    Dbs,
    Platt,
    Temperature,
    Identity,
}

impl CalibratorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CalibratorKind::Dbs => "dbs",
            CalibratorKind::Platt => "platt",
            CalibratorKind::Temperature => "temperature",
            CalibratorKind::Identity => "identity",
        }
    }

    /// Number of free parameters optimized by [`fit`].
    pub fn num_params(self) -> usize {
        match self {
            CalibratorKind::Dbs | CalibratorKind::Platt => 2,
            CalibratorKind::Temperature => 1,
            CalibratorKind::Identity => 0,
        }
    }
}

impl fmt::Display for CalibratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CalibratorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dbs" => Ok(CalibratorKind::Dbs),
            "platt" => Ok(CalibratorKind::Platt),
            "temperature" | "ts" => Ok(CalibratorKind::Temperature),
            "identity" | "none" => Ok(CalibratorKind::Identity),
            other => Err(format!(
                "unknown calibrator `{other}` (expected dbs, platt, temperature or identity)"
            )),
        }
    }
}

/// A fitted (or hand-specified) scaling function. Immutable once built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibrator {
    kind: CalibratorKind,
    a: f64,
    b: f64,
}

impl Calibrator {
    pub fn new(kind: CalibratorKind, a: f64, b: f64) -> Result<Self, CalibrationError> {
        let invalid = |reason| CalibrationError::InvalidParameters { kind, a, b, reason };
        if !a.is_finite() || !b.is_finite() {
            return Err(invalid("parameters must be finite"));
        }
        match kind {
            CalibratorKind::Dbs if a <= 0.0 || b <= 0.0 => Err(invalid("DBS requires a > 0 and b > 0")),
            CalibratorKind::Platt if a < 0.0 => Err(invalid("Platt requires a >= 0")),
            CalibratorKind::Temperature if a < 0.0 => Err(invalid("temperature requires a >= 0")),
            CalibratorKind::Temperature if b != 0.0 => Err(invalid("temperature fixes b = 0")),
            _ => Ok(Self { kind, a, b }),
        }
    }

    pub fn identity() -> Self {
        Self {
            kind: CalibratorKind::Identity,
            a: 1.0,
            b: 1.0,
        }
    }

    pub fn dbs(a: f64, b: f64) -> Result<Self, CalibrationError> {
        Self::new(CalibratorKind::Dbs, a, b)
    }

    pub fn platt(a: f64, b: f64) -> Result<Self, CalibrationError> {
        Self::new(CalibratorKind::Platt, a, b)
    }

    pub fn temperature(a: f64) -> Result<Self, CalibrationError> {
        Self::new(CalibratorKind::Temperature, a, 0.0)
    }

    /// Starting point of [`fit`]: the identity for DBS, `a = 1, b = 0` for
    /// the logistic families.
    pub fn initial(kind: CalibratorKind) -> Self {
        match kind {
            CalibratorKind::Dbs => Self { kind, a: 1.0, b: 1.0 },
            CalibratorKind::Platt | CalibratorKind::Temperature => Self { kind, a: 1.0, b: 0.0 },
            CalibratorKind::Identity => Self::identity(),
        }
    }

    pub fn kind(&self) -> CalibratorKind {
        self.kind
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }

    /// Unconstrained parameter vector used by the optimizer.
    pub fn log_params(&self) -> Vec<f64> {
        match self.kind {
            CalibratorKind::Dbs => vec![self.a.ln(), self.b.ln()],
            CalibratorKind::Platt => vec![self.a.ln(), self.b],
            CalibratorKind::Temperature => vec![self.a.ln()],
            CalibratorKind::Identity => vec![],
        }
    }

    pub fn from_log_params(kind: CalibratorKind, params: &[f64]) -> Result<Self, CalibrationError> {
        assert_eq!(params.len(), kind.num_params(), "parameter count for {kind}");
        match kind {
            CalibratorKind::Dbs => Self::dbs(params[0].exp(), params[1].exp()),
            CalibratorKind::Platt => Self::platt(params[0].exp(), params[1]),
            CalibratorKind::Temperature => Self::temperature(params[0].exp()),
            CalibratorKind::Identity => Ok(Self::identity()),
        }
    }

    /// Calibrated score for `raw_score ∈ [0, 1]`.
    pub fn apply(&self, raw_score: f64) -> f64 {
        let s = raw_score.clamp(0.0, 1.0);
        match self.kind {
            CalibratorKind::Identity => s,
            CalibratorKind::Dbs => dbs(s, self.a, self.b),
            CalibratorKind::Platt | CalibratorKind::Temperature => sigmoid(self.a * s + self.b),
        }
    }

    pub fn apply_all(&self, raw_scores: &[f64]) -> Vec<f64> {
        raw_scores.iter().map(|&s| self.apply(s)).collect()
    }
}

impl Default for Calibrator {
    fn default() -> Self {
        Self::identity()
    }
}

/// `1 − (1 − s^a)^b`, evaluated through `expm1`/`ln_1p` so that both tails
/// keep their precision and the endpoints map exactly to 0 and 1.
pub fn dbs(s: f64, a: f64, b: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let u = (a * s.ln()).exp();
    let log_complement = b * (-u).ln_1p();
    (-log_complement.exp_m1()).clamp(0.0, 1.0)
}

/// Inverse of [`dbs`] in its first argument: `(1 − (1 − p)^{1/b})^{1/a}`.
pub fn dbs_inverse(p: f64, a: f64, b: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let inner = -((-p).ln_1p() / b).exp_m1();
    (inner.ln() / a).exp().clamp(0.0, 1.0)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy of `cal` on `data`, with calibrated scores clamped
/// to `[1e-7, 1 − 1e-7]`.
pub fn bce_loss(cal: &Calibrator, data: &[CalibrationSample]) -> Result<f64, CalibrationError> {
    if data.is_empty() {
        return Err(CalibrationError::EmptyDataset);
    }
    let total: f64 = data
        .iter()
        .map(|d| {
            let s = cal.apply(d.raw_score).clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
            if d.label {
                -s.ln()
            } else {
                -(1.0 - s).ln()
            }
        })
        .sum();
    Ok(total / data.len() as f64)
}

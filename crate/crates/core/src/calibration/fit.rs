use serde::{Deserialize, Serialize};

use super::{sigmoid, CalibrationError, CalibrationSample, Calibrator, CalibratorKind, SCORE_CLAMP};
use crate::par;

const CHUNK_LEN: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub step_size: f64,
    pub max_iterations: usize,
    /// Stop once the loss improved by less than this over `patience` steps.
    pub tolerance: f64,
    pub patience: usize,
    /// Raw scores are clamped to `[input_clamp, 1 − input_clamp]` before fitting.
    pub input_clamp: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            step_size: 0.1,
            max_iterations: 2000,
            tolerance: 1e-9,
            patience: 20,
            input_clamp: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub iterations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fitted {
    pub calibrator: Calibrator,
    pub stats: FitStats,
}

#[derive(Debug, Clone, Copy)]
struct Prepared {
    raw: f64,
    ln_raw: f64,
    target: f64,
}

/// Mean BCE over a calibration set as a function of the unconstrained
/// parameters (`ln a`, `ln b` for DBS; `ln a`, `b` for Platt; `ln a` for
/// Temperature), with its analytic gradient.
#[derive(Debug, Clone)]
pub struct Objective {
    kind: CalibratorKind,
    data: Vec<Prepared>,
}

impl Objective {
    pub fn new(kind: CalibratorKind, data: &[CalibrationSample], input_clamp: f64) -> Result<Self, CalibrationError> {
        if data.is_empty() {
            return Err(CalibrationError::EmptyDataset);
        }
        let lo = input_clamp.clamp(0.0, 0.5);
        let mut data: Vec<Prepared> = data
            .iter()
            .map(|d| {
                let raw = d.raw_score.clamp(lo, 1.0 - lo);
                Prepared {
                    raw,
                    ln_raw: raw.ln(),
                    target: d.target(),
                }
            })
            .collect();
        // sorted by score the per-sample branches are predictable, and the sum
        // order no longer depends on the order samples were given in
        data.sort_by(|x, y| x.raw.total_cmp(&y.raw).then(x.target.total_cmp(&y.target)));
        Ok(Self { kind, data })
    }

    pub fn kind(&self) -> CalibratorKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        self.evaluate(params).0
    }

    /// Returns `(loss, gradient)` at `params`.
    pub fn evaluate(&self, params: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(params.len(), self.kind.num_params());
        let kind = self.kind;
        let p = match kind {
            CalibratorKind::Identity => [0.0, 0.0],
            CalibratorKind::Dbs => [params[0].exp(), params[1].exp()],
            CalibratorKind::Platt => [params[0].exp(), params[1]],
            CalibratorKind::Temperature => [params[0].exp(), 0.0],
        };
        let partials = par::map_chunks(&self.data, CHUNK_LEN, |chunk| {
            let mut acc = [0.0f64; 3];
            for d in chunk {
                let (l, g) = sample_terms(kind, p, d);
                acc[0] += l;
                acc[1] += g[0];
                acc[2] += g[1];
            }
            acc
        });
        let mut total = [0.0f64; 3];
        for part in &partials {
            for k in 0..3 {
                total[k] += part[k];
            }
        }
        let n = self.data.len() as f64;
        let grad = (0..kind.num_params()).map(|k| total[k + 1] / n).collect();
        (total[0] / n, grad)
    }
}

fn log_loss(s: f64, y: f64) -> f64 {
    -(y * s.ln() + (1.0 - y) * (1.0 - s).ln())
}

/// `(e^x, 1 − e^x)` for `x <= 0`, taking each from whichever form keeps full
/// relative precision.
#[inline]
fn exp_and_complement(x: f64) -> (f64, f64) {
    if x < -std::f64::consts::LN_2 {
        let e = x.exp();
        (e, 1.0 - e)
    } else {
        let c = -x.exp_m1();
        (1.0 - c, c)
    }
}

/// Loss of one sample and its derivative w.r.t. the two unconstrained
/// parameters (unused slots are zero). `p` holds the constrained values
/// `(a, b)`.
#[inline]
fn sample_terms(kind: CalibratorKind, p: [f64; 2], d: &Prepared) -> (f64, [f64; 2]) {
    match kind {
        CalibratorKind::Identity => {
            let s = d.raw.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
            (log_loss(s, d.target), [0.0, 0.0])
        }
        CalibratorKind::Dbs => {
            let (a, b) = (p[0], p[1]);
            // u = s̃^a, v = 1 − u, w = v^b = 1 − s
            let ln_u = a * d.ln_raw;
            let (u, v) = exp_and_complement(ln_u);
            if v <= 0.0 {
                return (log_loss(1.0 - SCORE_CLAMP, d.target), [0.0, 0.0]);
            }
            let ln_v = v.ln();
            let ln_w = b * ln_v;
            let (w, s) = exp_and_complement(ln_w);
            if !(SCORE_CLAMP..=1.0 - SCORE_CLAMP).contains(&s) {
                return (log_loss(s.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP), d.target), [0.0, 0.0]);
            }
            let y = d.target;
            let pos = if y != 0.0 { y * s.ln() } else { 0.0 };
            let loss = -(pos + (1.0 - y) * ln_w);
            // dL/ds = (s − y) / (s w) and ds/d ln a = a b (w / v) u ln s̃, so
            // with k = (s − y) / s the w cancels; k = −w / s exactly when y = 1
            let k = if y == 0.0 {
                1.0
            } else if y == 1.0 {
                -w / s
            } else {
                (s - y) / s
            };
            let g_log_a = k * a * b * u * d.ln_raw / v;
            let g_log_b = -k * b * ln_v;
            (loss, [g_log_a, g_log_b])
        }
        CalibratorKind::Platt | CalibratorKind::Temperature => {
            let (a, bias) = (p[0], p[1]);
            let s = sigmoid(a * d.raw + bias);
            let sc = s.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
            let loss = log_loss(sc, d.target);
            if sc != s {
                return (loss, [0.0, 0.0]);
            }
            // dL/dz = s − y for the logistic link
            let dz = s - d.target;
            let g_bias = if kind == CalibratorKind::Platt { dz } else { 0.0 };
            (loss, [dz * d.raw * a, g_bias])
        }
    }
}

/// Fits a calibrator of `kind` by full-batch gradient descent on mean BCE.
///
/// Starts from [`Calibrator::initial`] and returns the lowest-loss iterate, so
/// the final loss never exceeds the initial one. Deterministic for fixed
/// inputs, with or without the `parallel` feature.
pub fn fit(kind: CalibratorKind, data: &[CalibrationSample], opts: &FitOptions) -> Result<Fitted, CalibrationError> {
    if data.is_empty() {
        return Err(CalibrationError::EmptyDataset);
    }
    let positives = data.iter().filter(|d| d.label).count();
    if positives == 0 {
        return Err(CalibrationError::DegenerateDataset("negative"));
    }
    if positives == data.len() {
        return Err(CalibrationError::DegenerateDataset("positive"));
    }

    let objective = Objective::new(kind, data, opts.input_clamp)?;
    let start = Calibrator::initial(kind);
    let mut params = start.log_params();
    let (initial_loss, mut grad) = objective.evaluate(&params);
    if !initial_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(CalibrationError::NonFinite { iteration: 0 });
    }
    if kind == CalibratorKind::Identity {
        return Ok(Fitted {
            calibrator: start,
            stats: FitStats {
                iterations: 0,
                initial_loss,
                final_loss: initial_loss,
                converged: true,
            },
        });
    }

    let mut best = (initial_loss, params.clone());
    let mut history = vec![initial_loss];
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=opts.max_iterations {
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= opts.step_size * g;
        }
        // clamped scores keep the loss bounded, so a bad step shows up as
        // parameters that overflow once exponentiated
        if Calibrator::from_log_params(kind, &params).is_err() {
            return Err(CalibrationError::NonFinite { iteration: it });
        }
        let (loss, g) = objective.evaluate(&params);
        if !loss.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return Err(CalibrationError::NonFinite { iteration: it });
        }
        grad = g;
        iterations = it;
        if loss < best.0 {
            best = (loss, params.clone());
        }
        history.push(loss);
        if history.len() > opts.patience {
            let earlier = history[history.len() - 1 - opts.patience];
            if earlier - loss < opts.tolerance {
                converged = true;
                break;
            }
        }
    }

    let calibrator = Calibrator::from_log_params(kind, &best.1)?;
    Ok(Fitted {
        calibrator,
        stats: FitStats {
            iterations,
            initial_loss,
            final_loss: best.0,
            converged,
        },
    })
}

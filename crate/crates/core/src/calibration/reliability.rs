use serde::Serialize;

use super::{CalibrationError, CalibrationSample, Calibrator};

pub const DEFAULT_NUM_BINS: usize = 10;

/// Equal-width binning of calibrated scores against empirical accuracy.
///
/// Empty bins report zero confidence, zero accuracy and zero count and carry no
/// weight in `ece`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityDiagram {
    pub bin_edges: Vec<f64>,
    pub bin_confidence: Vec<f64>,
    pub bin_accuracy: Vec<f64>,
    pub bin_count: Vec<usize>,
    pub ece: f64,
}

impl ReliabilityDiagram {
    pub fn num_bins(&self) -> usize {
        self.bin_count.len()
    }

    pub fn occupied_bins(&self) -> usize {
        self.bin_count.iter().filter(|&&c| c > 0).count()
    }
}

fn bin_index(score: f64, num_bins: usize) -> usize {
    ((score * num_bins as f64).floor() as usize).min(num_bins - 1)
}

pub fn reliability(
    data: &[CalibrationSample],
    cal: &Calibrator,
    num_bins: usize,
) -> Result<ReliabilityDiagram, CalibrationError> {
    if data.is_empty() {
        return Err(CalibrationError::EmptyDataset);
    }
    if num_bins == 0 {
        return Err(CalibrationError::NoBins);
    }
    let mut conf_sum = vec![0.0; num_bins];
    let mut pos = vec![0usize; num_bins];
    let mut count = vec![0usize; num_bins];
    for d in data {
        let s = cal.apply(d.raw_score);
        let k = bin_index(s, num_bins);
        conf_sum[k] += s;
        count[k] += 1;
        pos[k] += usize::from(d.label);
    }

    let mut bin_confidence = vec![0.0; num_bins];
    let mut bin_accuracy = vec![0.0; num_bins];
    let mut weighted_gap = 0.0;
    for k in 0..num_bins {
        if count[k] == 0 {
            continue;
        }
        let n = count[k] as f64;
        bin_confidence[k] = (conf_sum[k] / n).clamp(0.0, 1.0);
        bin_accuracy[k] = pos[k] as f64 / n;
        weighted_gap += n * (bin_confidence[k] - bin_accuracy[k]).abs();
    }
    let bin_edges = (0..=num_bins).map(|k| k as f64 / num_bins as f64).collect();
    Ok(ReliabilityDiagram {
        bin_edges,
        bin_confidence,
        bin_accuracy,
        bin_count: count,
        ece: (weighted_gap / data.len() as f64).clamp(0.0, 1.0),
    })
}

/// ECE with equal-width bins; shorthand for `reliability(..).ece`.
pub fn expected_calibration_error(
    data: &[CalibrationSample],
    cal: &Calibrator,
    num_bins: usize,
) -> Result<f64, CalibrationError> {
    reliability(data, cal, num_bins).map(|r| r.ece)
}

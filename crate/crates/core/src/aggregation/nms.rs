use serde::{Deserialize, Serialize};

use super::{CandidateSet, IouMatrix};
use crate::geometry::IouVariant;

/// Gaussian Soft-NMS parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftNmsParams {
    pub sigma: f64,
    pub score_floor: f64,
}

impl Default for SoftNmsParams {
    fn default() -> Self {
        Self {
            sigma: 0.5,
            score_floor: 0.001,
        }
    }
}

fn greedy(order: &[usize], n: usize, iou: impl Fn(usize, usize) -> f64, iou_threshold: f64) -> Vec<usize> {
    let mut suppressed = vec![false; n];
    let mut keep = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        keep.push(i);
        for &j in &order[pos + 1..] {
            if !suppressed[j] && iou(i, j) > iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    keep.sort_unstable();
    keep
}

/// Greedy NMS: keep the best remaining candidate, drop everything overlapping
/// it by more than `iou_threshold`, repeat. Returns kept indices ascending.
pub fn nms(cands: &CandidateSet, iou_threshold: f64, variant: IouVariant) -> Vec<usize> {
    let boxes = cands.boxes();
    greedy(
        &cands.canonical_order(),
        cands.len(),
        |i, j| variant.compute_unchecked(&boxes[i], &boxes[j]),
        iou_threshold,
    )
}

/// Greedy NMS over a precomputed IoU matrix; ties broken by lower index.
pub fn nms_on_matrix(iou: &IouMatrix, scores: &[f64], iou_threshold: f64) -> Vec<usize> {
    assert_eq!(iou.len(), scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    greedy(&order, scores.len(), |i, j| iou.get(i, j), iou_threshold)
}

/// Gaussian Soft-NMS returning `(index, decayed score)` in selection order.
///
/// The highest current score is taken, every remaining candidate is decayed by
/// `exp(−IoU² / sigma)` against it, and candidates that fall below
/// `score_floor` are dropped.
pub fn soft_nms_indexed(cands: &CandidateSet, params: &SoftNmsParams, variant: IouVariant) -> Vec<(usize, f64)> {
    let boxes = cands.boxes();
    let mut remaining: Vec<(usize, f64)> = cands
        .canonical_order()
        .into_iter()
        .map(|i| (i, cands.scores()[i]))
        .filter(|&(_, s)| s >= params.score_floor)
        .collect();
    let mut kept = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        // first maximum in canonical order
        let best = remaining
            .iter()
            .enumerate()
            .fold(0, |b, (k, r)| if r.1 > remaining[b].1 { k } else { b });
        let (m, sm) = remaining.remove(best);
        kept.push((m, sm));
        for r in remaining.iter_mut() {
            let o = variant.compute_unchecked(&boxes[m], &boxes[r.0]);
            if o > 0.0 {
                r.1 *= (-o * o / params.sigma).exp();
            }
        }
        remaining.retain(|&(_, s)| s >= params.score_floor);
    }
    kept
}

/// Soft-NMS survivors with their decayed scores, in selection order.
pub fn soft_nms(cands: &CandidateSet, params: &SoftNmsParams, variant: IouVariant) -> CandidateSet {
    let kept = soft_nms_indexed(cands, params, variant);
    let idx: Vec<usize> = kept.iter().map(|&(i, _)| i).collect();
    let sub = cands.subset(&idx);
    let scores = kept.iter().map(|&(_, s)| s).collect();
    CandidateSet::new(sub.boxes().to_vec(), scores, sub.source_agents().to_vec())
        .expect("decayed scores stay within [0, 1]")
}

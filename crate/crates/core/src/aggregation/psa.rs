use std::cmp::Ordering;

use super::{build_graph_with_threshold, BoxGraph, CandidateSet, IouMatrix, PsaParams};
use crate::geometry::IouVariant;
use crate::par;

/// `softmax(v / epsilon)` with max subtraction. Order of entries is kept.
pub fn softmax_scaled(v: &[f64], epsilon: f64) -> Vec<f64> {
    assert!(epsilon > 0.0, "softmax temperature must be positive");
    if v.is_empty() {
        return Vec::new();
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|&x| ((x - max) / epsilon).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Promote, suppress and select within one component.
///
/// `members` must already be in canonical order; sums run in that order so the
/// result is independent of the caller's candidate order.
fn select_component(members: &[usize], iou: &IouMatrix, scores: &[f64], params: &PsaParams) -> Vec<usize> {
    if members.len() == 1 {
        // softmax of a single entry is exactly 1
        return if 1.0 > params.phi { members.to_vec() } else { Vec::new() };
    }
    let promoted: Vec<f64> = members
        .iter()
        .map(|&i| members.iter().map(|&j| iou.get(i, j) * scores[j]).sum())
        .collect();
    let suppressed = softmax_scaled(&promoted, params.epsilon);
    members
        .iter()
        .zip(&suppressed)
        .filter(|(_, &p)| p > params.phi)
        .map(|(&i, _)| i)
        .collect()
}

fn run(graph: &BoxGraph, scores: &[f64], params: &PsaParams, order: impl Fn(usize, usize) -> Ordering + Sync) -> Vec<usize> {
    assert_eq!(graph.iou.len(), scores.len(), "one score per vertex");
    let per_component = par::map_slice(&graph.components, |comp| {
        let mut members = comp.clone();
        members.sort_by(|&i, &j| order(i, j));
        select_component(&members, &graph.iou, scores, params)
    });
    let mut selected: Vec<usize> = per_component.into_iter().flatten().collect();
    selected.sort_unstable();
    selected
}

/// Promote-Suppress Aggregation on a prebuilt graph.
///
/// Within each component, ties are ordered by score descending then index.
pub fn psa_on_graph(graph: &BoxGraph, scores: &[f64], params: &PsaParams) -> Vec<usize> {
    run(graph, scores, params, |i, j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)))
}

/// Promote-Suppress Aggregation: for every connected component of the IoU
/// graph, promote each candidate to the IoU-weighted sum of its component's
/// scores, suppress with `softmax(· / epsilon)`, and keep the candidates whose
/// normalized score exceeds `phi`. Returns selected indices in ascending order.
pub fn psa(cands: &CandidateSet, params: &PsaParams, variant: IouVariant) -> Vec<usize> {
    psa_with_threshold(cands, params, variant, 0.0)
}

/// [`psa`] with edges only where IoU exceeds `min_edge_iou`.
pub fn psa_with_threshold(cands: &CandidateSet, params: &PsaParams, variant: IouVariant, min_edge_iou: f64) -> Vec<usize> {
    if cands.is_empty() {
        return Vec::new();
    }
    let graph = build_graph_with_threshold(cands, variant, min_edge_iou);
    run(&graph, cands.scores(), params, |i, j| cands.canonical_cmp(i, j))
}

//! Independent reference implementations and random instance generators
//! shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use std::f64::consts::PI;

use calibfuse_core::evaluation::MatchResult;
use calibfuse_core::geometry::{ConvexPolygon2D, Point2};
use calibfuse_core::{AgentId, Box3D, CandidateSet, IouVariant};
use rand::Rng;

pub fn cross(a: Point2, b: Point2, p: Point2) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Convex quadrilateral: four points on a circle at sorted angles, stretched
/// and shifted, so it is convex and counter-clockwise by construction.
pub fn random_convex_quad<R: Rng>(rng: &mut R, spread: f64) -> ConvexPolygon2D {
    loop {
        let mut angles: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        angles.sort_by(f64::total_cmp);
        let gaps_ok = (0..4).all(|i| {
            let next = if i == 3 { angles[0] + 2.0 * PI } else { angles[i + 1] };
            next - angles[i] > 0.2
        });
        if !gaps_ok {
            continue;
        }
        let (sx, sy) = (rng.random_range(0.5..2.0), rng.random_range(0.5..2.0));
        let (cx, cy) = (rng.random_range(-spread..spread), rng.random_range(-spread..spread));
        let v = angles.iter().map(|t| [cx + sx * t.cos(), cy + sy * t.sin()]).collect();
        return ConvexPolygon2D::new(v).expect("ccw convex quad");
    }
}

fn line_intersection(a: Point2, b: Point2, c: Point2, d: Point2) -> Option<Point2> {
    let r = [b[0] - a[0], b[1] - a[1]];
    let s = [d[0] - c[0], d[1] - c[1]];
    let den = r[0] * s[1] - r[1] * s[0];
    if den.abs() < 1e-15 {
        return None;
    }
    let t = ((c[0] - a[0]) * s[1] - (c[1] - a[1]) * s[0]) / den;
    Some([a[0] + t * r[0], a[1] + t * r[1]])
}

fn hull_area(mut pts: Vec<Point2>) -> f64 {
    pts.sort_by(|p, q| p[0].total_cmp(&q[0]).then(p[1].total_cmp(&q[1])));
    pts.dedup();
    if pts.len() < 3 {
        return 0.0;
    }
    let mut lower: Vec<Point2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    let n = lower.len();
    (0..n)
        .map(|i| {
            let (p, q) = (lower[i], lower[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
        * 0.5
}

/// Area of `P ∩ Q` as the convex hull of every vertex and edge-line crossing
/// that satisfies all half-plane constraints of both polygons.
pub fn halfplane_intersection_area(p: &ConvexPolygon2D, q: &ConvexPolygon2D) -> f64 {
    let edges: Vec<(Point2, Point2)> = [p.vertices(), q.vertices()]
        .iter()
        .flat_map(|v| (0..v.len()).map(move |i| (v[i], v[(i + 1) % v.len()])))
        .collect();
    let inside = |x: Point2| edges.iter().all(|&(a, b)| cross(a, b, x) >= -1e-9);
    let mut cands: Vec<Point2> = p.vertices().iter().chain(q.vertices()).copied().collect();
    for i in 0..edges.len() {
        for j in (i + 1)..edges.len() {
            if let Some(x) = line_intersection(edges[i].0, edges[i].1, edges[j].0, edges[j].1) {
                cands.push(x);
            }
        }
    }
    cands.retain(|&x| inside(x));
    hull_area(cands)
}

pub fn random_box<R: Rng>(rng: &mut R, spread: f64, frame: &str) -> Box3D {
    Box3D::new(
        rng.random_range(-spread..spread),
        rng.random_range(-spread..spread),
        rng.random_range(-0.5..0.5),
        rng.random_range(1.0..4.0),
        rng.random_range(0.8..2.5),
        rng.random_range(1.0..2.0),
        rng.random_range(-PI..PI),
        frame.into(),
    )
    .unwrap()
}

fn corners(b: &Box3D) -> [Point2; 4] {
    let (s, c) = b.yaw().sin_cos();
    let (hl, hw) = (0.5 * b.length(), 0.5 * b.width());
    [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)].map(|(u, v)| [b.cx() + c * u - s * v, b.cy() + s * u + c * v])
}

struct Footprint {
    cx: f64,
    cy: f64,
    c: f64,
    s: f64,
    hl: f64,
    hw: f64,
}

impl Footprint {
    fn new(b: &Box3D) -> Self {
        let (s, c) = b.yaw().sin_cos();
        Self {
            cx: b.cx(),
            cy: b.cy(),
            c,
            s,
            hl: 0.5 * b.length(),
            hw: 0.5 * b.width(),
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        (self.c * dx + self.s * dy).abs() <= self.hl && (-self.s * dx + self.c * dy).abs() <= self.hw
    }
}

/// Monte-Carlo BEV IoU: uniform points over the joint bounding rectangle.
/// Returns `(estimate, standard error)`.
pub fn monte_carlo_bev_iou<R: Rng>(a: &Box3D, b: &Box3D, samples: usize, rng: &mut R) -> (f64, f64) {
    let pts: Vec<Point2> = corners(a).into_iter().chain(corners(b)).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in &pts {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let (fa, fb) = (Footprint::new(a), Footprint::new(b));
    let (mut both, mut either) = (0u64, 0u64);
    for _ in 0..samples {
        let x = x0 + (x1 - x0) * rng.random::<f64>();
        let y = y0 + (y1 - y0) * rng.random::<f64>();
        let (ia, ib) = (fa.contains(x, y), fb.contains(x, y));
        both += u64::from(ia && ib);
        either += u64::from(ia || ib);
    }
    let p = both as f64 / either as f64;
    (p, (p * (1.0 - p) / either as f64).sqrt())
}

/// Textbook NMS: repeatedly take the best remaining candidate (canonical
/// order on ties) and discard everything overlapping it above `thr`.
pub fn nms_reference(cands: &CandidateSet, thr: f64, variant: IouVariant) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..cands.len()).collect();
    let mut keep = Vec::new();
    while !remaining.is_empty() {
        let best = *remaining
            .iter()
            .min_by(|&&i, &&j| cands.canonical_cmp(i, j))
            .unwrap();
        keep.push(best);
        let b = &cands.boxes()[best];
        remaining.retain(|&j| j != best && variant.compute(b, &cands.boxes()[j]).unwrap() <= thr);
    }
    keep.sort_unstable();
    keep
}

/// Random candidate set of `n` boxes clustered so that components of several
/// sizes appear. Scores are drawn from a small grid half of the time to
/// produce ties.
pub fn random_candidates<R: Rng>(rng: &mut R, n: usize) -> CandidateSet {
    let agents = ["a", "b", "c"];
    let tied = rng.random_bool(0.5);
    let centers: Vec<(f64, f64)> = (0..(n / 3).max(1))
        .map(|_| (rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)))
        .collect();
    let mut c = CandidateSet::empty();
    for _ in 0..n {
        let (x, y) = centers[rng.random_range(0..centers.len())];
        let b = Box3D::new(
            x + rng.random_range(-1.5..1.5),
            y + rng.random_range(-1.5..1.5),
            rng.random_range(0.6..1.0),
            rng.random_range(3.8..5.0),
            rng.random_range(1.7..2.2),
            rng.random_range(1.4..1.8),
            rng.random_range(-0.3..0.3),
            "ego".into(),
        )
        .unwrap();
        let s = if tied {
            rng.random_range(1..10) as f64 / 10.0
        } else {
            rng.random::<f64>()
        };
        c.push(b, s, AgentId::new(agents[rng.random_range(0..3)])).unwrap();
    }
    c
}

/// AP by brute force: every distinct score is a threshold; at each one the
/// detections at or above it are matched from scratch, then interpolated
/// precision at recall r is the best precision at any recall >= r.
pub fn ap_by_enumeration(frames: &[(CandidateSet, Vec<Box3D>)], iou_thr: f64, variant: IouVariant) -> f64 {
    let num_gt: usize = frames.iter().map(|f| f.1.len()).sum();
    let mut thresholds: Vec<f64> = frames.iter().flat_map(|f| f.0.scores().to_vec()).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut pr: Vec<(f64, f64)> = Vec::new();
    for &t in &thresholds {
        let (mut tp, mut n) = (0usize, 0usize);
        for (dets, gts) in frames {
            let mut taken = vec![false; gts.len()];
            for i in dets.canonical_order() {
                if dets.scores()[i] < t {
                    continue;
                }
                n += 1;
                let mut best: Option<(usize, f64)> = None;
                for (g, gt) in gts.iter().enumerate() {
                    let o = variant.compute(&dets.boxes()[i], gt).unwrap();
                    if !taken[g] && o >= iou_thr && best.is_none_or(|(_, bo)| o > bo) {
                        best = Some((g, o));
                    }
                }
                if let Some((g, _)) = best {
                    taken[g] = true;
                    tp += 1;
                }
            }
        }
        pr.push((tp as f64 / num_gt as f64, tp as f64 / n as f64));
    }
    let mut recalls: Vec<f64> = pr.iter().map(|p| p.0).collect();
    recalls.sort_by(f64::total_cmp);
    recalls.dedup();
    let mut ap = 0.0;
    let mut prev = 0.0;
    for r in recalls {
        let p = pr.iter().filter(|q| q.0 >= r).map(|q| q.1).fold(0.0, f64::max);
        ap += (r - prev) * p;
        prev = r;
    }
    ap
}

/// A small evaluation instance: up to `max_gt` separated unit-ish cars and up
/// to `max_det` detections, most of them jittered copies of a ground truth.
pub fn random_eval_frame<R: Rng>(rng: &mut R, max_det: usize, max_gt: usize) -> (CandidateSet, Vec<Box3D>) {
    let ng = rng.random_range(0..=max_gt);
    let nd = rng.random_range(0..=max_det);
    let car = |x: f64, y: f64, yaw: f64| Box3D::new(x, y, 0.8, 4.0, 2.0, 1.6, yaw, "ego".into()).unwrap();
    let gts: Vec<Box3D> = (0..ng).map(|g| car(10.0 * g as f64, 0.0, 0.0)).collect();
    let tied = rng.random_bool(0.3);
    let mut dets = CandidateSet::empty();
    for _ in 0..nd {
        let b = if ng > 0 && rng.random_bool(0.8) {
            let g = rng.random_range(0..ng);
            car(
                10.0 * g as f64 + rng.random_range(-0.6..0.6),
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.1..0.1),
            )
        } else {
            car(rng.random_range(-5.0..45.0), rng.random_range(5.0..10.0), 0.0)
        };
        let s = if tied { rng.random_range(1..4) as f64 / 4.0 } else { rng.random::<f64>() };
        dets.push(b, s, AgentId::new("ego")).unwrap();
    }
    (dets, gts)
}

/// Builds a match result by hand for sweep-only tests.
pub fn match_result(scores: &[f64], tp: &[bool], num_gt: usize) -> MatchResult {
    MatchResult {
        scores: scores.to_vec(),
        is_tp: tp.to_vec(),
        matched_gt: tp.iter().map(|_| None).collect(),
        num_gt,
    }
}

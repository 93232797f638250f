//! Oriented boxes and Intersection-over-Union.
//!
//! Boxes are upright: the only rotation is `yaw` about the vertical axis. BEV
//! IoU clips the two ground-plane footprints; 3D IoU multiplies the footprint
//! intersection by the vertical overlap.
//!
//! Both IoU functions evaluate their arguments in a canonical order, so
//! `iou(a, b)` and `iou(b, a)` are bit-identical.

mod polygon;

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use polygon::{polygon_intersection, ConvexPolygon2D, Point2, MIN_INTERSECTION_AREA};

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("box extent `{0}` must be positive, got {1}")]
    NonPositiveExtent(&'static str, f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("frame mismatch: `{0}` vs `{1}`")]
    FrameMismatch(FrameId, FrameId),
    #[error("polygon needs at least 3 vertices, got {0}")]
    DegeneratePolygon(usize),
    #[error("polygon vertices are not in counter-clockwise order")]
    NotCounterClockwise,
}

/// Opaque coordinate-frame label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrameId(String);

impl FrameId {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for FrameId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if wrapped >= PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Upright oriented 3D box. `length` runs along the heading, `width` across it.
#[derive(Debug, Clone, PartialEq)]
pub struct Box3D {
    cx: f64,
    cy: f64,
    cz: f64,
    length: f64,
    width: f64,
    height: f64,
    yaw: f64,
    frame_id: FrameId,
}

impl Box3D {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cx: f64,
        cy: f64,
        cz: f64,
        length: f64,
        width: f64,
        height: f64,
        yaw: f64,
        frame_id: FrameId,
    ) -> Result<Self, GeometryError> {
        for (name, v) in [("center", cx), ("center", cy), ("center", cz), ("yaw", yaw)] {
            if !v.is_finite() {
                return Err(GeometryError::NonFinite(name));
            }
        }
        for (name, v) in [("length", length), ("width", width), ("height", height)] {
            if !v.is_finite() {
                return Err(GeometryError::NonFinite(name));
            }
            if v <= 0.0 {
                return Err(GeometryError::NonPositiveExtent(name, v));
            }
        }
        Ok(Self {
            cx,
            cy,
            cz,
            length,
            width,
            height,
            yaw: normalize_angle(yaw),
            frame_id,
        })
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn cz(&self) -> f64 {
        self.cz
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn width(&self) -> f64 {
        self.width
    }
    pub fn height(&self) -> f64 {
        self.height
    }
    pub fn yaw(&self) -> f64 {
        self.yaw
    }
    pub fn frame_id(&self) -> &FrameId {
        &self.frame_id
    }

    pub fn volume(&self) -> f64 {
        self.length * self.width * self.height
    }

    pub fn bev_area(&self) -> f64 {
        self.length * self.width
    }

    /// Same box relabelled into another frame without moving it.
    pub fn with_frame(mut self, frame_id: FrameId) -> Self {
        self.frame_id = frame_id;
        self
    }

    /// Moves the center and heading, keeping the extents.
    pub fn with_pose(&self, cx: f64, cy: f64, cz: f64, yaw: f64, frame_id: FrameId) -> Result<Self, GeometryError> {
        Self::new(cx, cy, cz, self.length, self.width, self.height, yaw, frame_id)
    }

    fn half_diagonal(&self) -> f64 {
        0.5 * self.length.hypot(self.width)
    }

    /// Total order on geometry: `(cx, cy, cz, yaw, length, width, height)`.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.cx
            .total_cmp(&other.cx)
            .then(self.cy.total_cmp(&other.cy))
            .then(self.cz.total_cmp(&other.cz))
            .then(self.yaw.total_cmp(&other.yaw))
            .then(self.length.total_cmp(&other.length))
            .then(self.width.total_cmp(&other.width))
            .then(self.height.total_cmp(&other.height))
    }

    /// Whether the world point `(x, y)` lies in the footprint.
    pub fn contains_bev(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.yaw.sin_cos();
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        u.abs() <= 0.5 * self.length && v.abs() <= 0.5 * self.width
    }
}

/// Four-corner ground-plane footprint in counter-clockwise order.
pub fn box_to_bev_polygon(b: &Box3D) -> ConvexPolygon2D {
    let (s, c) = b.yaw.sin_cos();
    let hl = 0.5 * b.length;
    let hw = 0.5 * b.width;
    let corners = [(hl, -hw), (hl, hw), (-hl, hw), (-hl, -hw)]
        .map(|(u, v)| [b.cx + c * u - s * v, b.cy + s * u + c * v]);
    ConvexPolygon2D::from_ccw_unchecked(corners.to_vec())
}

/// Which IoU to use for graph edges and matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouVariant {
    #[serde(rename = "bev")]
    Bev,
    #[default]
    #[serde(rename = "3d")]
    ThreeD,
}

impl IouVariant {
    pub fn compute(self, a: &Box3D, b: &Box3D) -> Result<f64, GeometryError> {
        match self {
            IouVariant::Bev => iou_bev(a, b),
            IouVariant::ThreeD => iou_3d(a, b),
        }
    }

    pub(crate) fn compute_unchecked(self, a: &Box3D, b: &Box3D) -> f64 {
        match self {
            IouVariant::Bev => iou_bev_unchecked(a, b),
            IouVariant::ThreeD => iou_3d_unchecked(a, b),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IouVariant::Bev => "bev",
            IouVariant::ThreeD => "3d",
        }
    }
}

impl fmt::Display for IouVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for IouVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bev" => Ok(IouVariant::Bev),
            "3d" => Ok(IouVariant::ThreeD),
            other => Err(format!("unknown IoU variant `{other}` (expected bev or 3d)")),
        }
    }
}

fn check_frames(a: &Box3D, b: &Box3D) -> Result<(), GeometryError> {
    if a.frame_id != b.frame_id {
        return Err(GeometryError::FrameMismatch(a.frame_id.clone(), b.frame_id.clone()));
    }
    Ok(())
}

fn canonical_pair<'a>(a: &'a Box3D, b: &'a Box3D) -> (&'a Box3D, &'a Box3D) {
    if a.canonical_cmp(b) == Ordering::Greater {
        (b, a)
    } else {
        (a, b)
    }
}

fn bev_intersection_area(a: &Box3D, b: &Box3D) -> f64 {
    let (p, q) = canonical_pair(a, b);
    let reach = p.half_diagonal() + q.half_diagonal();
    let (dx, dy) = (q.cx - p.cx, q.cy - p.cy);
    if dx * dx + dy * dy > reach * reach {
        return 0.0;
    }
    polygon_intersection(&box_to_bev_polygon(p), &box_to_bev_polygon(q)).area()
}

fn vertical_overlap(a: &Box3D, b: &Box3D) -> f64 {
    let top = (a.cz + 0.5 * a.height).min(b.cz + 0.5 * b.height);
    let bottom = (a.cz - 0.5 * a.height).max(b.cz - 0.5 * b.height);
    (top - bottom).max(0.0)
}

fn ratio(inter: f64, union: f64) -> f64 {
    if inter <= 0.0 || union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

pub(crate) fn iou_bev_unchecked(a: &Box3D, b: &Box3D) -> f64 {
    let inter = bev_intersection_area(a, b);
    ratio(inter, a.bev_area() + b.bev_area() - inter)
}

pub(crate) fn iou_3d_unchecked(a: &Box3D, b: &Box3D) -> f64 {
    let dz = vertical_overlap(a, b);
    if dz <= 0.0 {
        return 0.0;
    }
    let inter = bev_intersection_area(a, b) * dz;
    ratio(inter, a.volume() + b.volume() - inter)
}

/// Ground-plane IoU of the two footprints.
pub fn iou_bev(a: &Box3D, b: &Box3D) -> Result<f64, GeometryError> {
    check_frames(a, b)?;
    Ok(iou_bev_unchecked(a, b))
}

/// Volume IoU of two upright boxes.
pub fn iou_3d(a: &Box3D, b: &Box3D) -> Result<f64, GeometryError> {
    check_frames(a, b)?;
    Ok(iou_3d_unchecked(a, b))
}

use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, Box3D, FrameId, GeometryError};

/// Planar rigid transform from a local frame into the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, yaw: f64) -> Result<Self, GeometryError> {
        if !(x.is_finite() && y.is_finite() && yaw.is_finite()) {
            return Err(GeometryError::NonFinite("pose"));
        }
        Ok(Self {
            x,
            y,
            yaw: normalize_angle(yaw),
        })
    }

    pub fn identity() -> Self {
        Self::default()
    }

    /// Local point to world.
    pub fn apply(&self, u: f64, v: f64) -> (f64, f64) {
        let (s, c) = self.yaw.sin_cos();
        (self.x + c * u - s * v, self.y + s * u + c * v)
    }

    /// World point to local.
    pub fn apply_inverse(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (x - self.x, y - self.y);
        (c * dx + s * dy, -s * dx + c * dy)
    }

    /// Re-expresses `b`, given in this pose's local frame, in the local frame of
    /// `target`, labelled `frame`.
    pub fn transform_box(&self, b: &Box3D, target: &Pose2D, frame: FrameId) -> Result<Box3D, GeometryError> {
        if self == target {
            return b.with_pose(b.cx(), b.cy(), b.cz(), b.yaw(), frame);
        }
        let (wx, wy) = self.apply(b.cx(), b.cy());
        let (ex, ey) = target.apply_inverse(wx, wy);
        let yaw = normalize_angle(b.yaw() + self.yaw - target.yaw);
        b.with_pose(ex, ey, b.cz(), yaw, frame)
    }
}

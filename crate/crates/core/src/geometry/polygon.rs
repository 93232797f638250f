//! Convex polygons in the ground plane and their intersection.

use super::GeometryError;

pub type Point2 = [f64; 2];

/// Intersections with less area than this (m²) are treated as empty.
pub const MIN_INTERSECTION_AREA: f64 = 1e-12;

const DUPLICATE_VERTEX_EPS: f64 = 1e-12;

/// A convex polygon with counter-clockwise vertices. An empty vertex list is
/// the empty polygon.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvexPolygon2D {
    vertices: Vec<Point2>,
}

impl ConvexPolygon2D {
    pub fn new(vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        if vertices.is_empty() {
            return Ok(Self::empty());
        }
        if vertices.len() < 3 {
            return Err(GeometryError::DegeneratePolygon(vertices.len()));
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite("polygon vertex"));
        }
        let poly = Self { vertices };
        if poly.signed_area() <= 0.0 {
            return Err(GeometryError::NotCounterClockwise);
        }
        Ok(poly)
    }

    pub(crate) fn from_ccw_unchecked(vertices: Vec<Point2>) -> Self {
        Self { vertices }
    }

    pub fn empty() -> Self {
        Self { vertices: Vec::new() }
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Shoelace signed area; positive for counter-clockwise order.
    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let mut twice = 0.0;
        for i in 0..n {
            let [x0, y0] = self.vertices[i];
            let [x1, y1] = self.vertices[(i + 1) % n];
            twice += x0 * y1 - x1 * y0;
        }
        0.5 * twice
    }

    pub fn area(&self) -> f64 {
        self.signed_area().max(0.0)
    }
}

#[inline]
fn cross(a: Point2, b: Point2, p: Point2) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Clips `subject` against the left half-plane of the directed edge `a -> b`.
fn clip_half_plane(subject: &[Point2], a: Point2, b: Point2, out: &mut Vec<Point2>) {
    out.clear();
    let n = subject.len();
    if n == 0 {
        return;
    }
    for i in 0..n {
        let s = subject[i];
        let e = subject[(i + 1) % n];
        let ds = cross(a, b, s);
        let de = cross(a, b, e);
        let s_in = ds >= 0.0;
        let e_in = de >= 0.0;
        if s_in && e_in {
            out.push(e);
        } else if s_in || e_in {
            let t = ds / (ds - de);
            let crossing = [s[0] + (e[0] - s[0]) * t, s[1] + (e[1] - s[1]) * t];
            out.push(crossing);
            if e_in {
                out.push(e);
            }
        }
    }
}

fn dedup_ring(points: &mut Vec<Point2>) {
    points.dedup_by(|b, a| {
        (a[0] - b[0]).abs() <= DUPLICATE_VERTEX_EPS && (a[1] - b[1]).abs() <= DUPLICATE_VERTEX_EPS
    });
    while points.len() > 1 {
        let first = points[0];
        let last = points[points.len() - 1];
        if (first[0] - last[0]).abs() <= DUPLICATE_VERTEX_EPS
            && (first[1] - last[1]).abs() <= DUPLICATE_VERTEX_EPS
        {
            points.pop();
        } else {
            break;
        }
    }
}

/// Intersection of two convex polygons by Sutherland–Hodgman clipping of `p`
/// against every edge of `q`.
///
/// Results with area below [`MIN_INTERSECTION_AREA`] collapse to the empty
/// polygon.
pub fn polygon_intersection(p: &ConvexPolygon2D, q: &ConvexPolygon2D) -> ConvexPolygon2D {
    if p.is_empty() || q.is_empty() {
        return ConvexPolygon2D::empty();
    }
    let mut current = p.vertices.clone();
    let mut scratch = Vec::with_capacity(current.len() + q.vertices.len());
    let m = q.vertices.len();
    for i in 0..m {
        clip_half_plane(&current, q.vertices[i], q.vertices[(i + 1) % m], &mut scratch);
        std::mem::swap(&mut current, &mut scratch);
        if current.is_empty() {
            return ConvexPolygon2D::empty();
        }
    }
    dedup_ring(&mut current);
    let poly = ConvexPolygon2D::from_ccw_unchecked(current);
    if poly.vertices.len() < 3 || poly.signed_area() < MIN_INTERSECTION_AREA {
        return ConvexPolygon2D::empty();
    }
    poly
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(cx: f64, cy: f64, half: f64) -> ConvexPolygon2D {
        ConvexPolygon2D::new(vec![
            [cx - half, cy - half],
            [cx + half, cy - half],
            [cx + half, cy + half],
            [cx - half, cy + half],
        ])
        .unwrap()
    }

    #[test]
    fn rejects_clockwise_and_short_rings() {
        assert!(matches!(
            ConvexPolygon2D::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]),
            Err(GeometryError::NotCounterClockwise)
        ));
        assert!(matches!(
            ConvexPolygon2D::new(vec![[0.0, 0.0], [1.0, 1.0]]),
            Err(GeometryError::DegeneratePolygon(2))
        ));
        assert!(ConvexPolygon2D::new(vec![]).unwrap().is_empty());
    }

    #[test]
    fn self_intersection_is_identity() {
        let p = square(0.3, -0.2, 0.5);
        let r = polygon_intersection(&p, &p);
        assert!((r.area() - p.area()).abs() < 1e-9);
    }

    #[test]
    fn disjoint_squares_are_empty() {
        let r = polygon_intersection(&square(0.0, 0.0, 0.5), &square(10.0, 0.0, 0.5));
        assert!(r.is_empty());
        assert_eq!(r.area(), 0.0);
    }

    #[test]
    fn half_overlap() {
        let r = polygon_intersection(&square(0.0, 0.0, 0.5), &square(0.5, 0.0, 0.5));
        assert!((r.area() - 0.5).abs() < 1e-12);
        assert!(r.signed_area() > 0.0);
    }

    #[test]
    fn touching_edges_collapse_to_empty() {
        let r = polygon_intersection(&square(0.0, 0.0, 0.5), &square(1.0, 0.0, 0.5));
        assert!(r.is_empty());
        let r = polygon_intersection(&square(0.0, 0.0, 0.5), &square(1.0, 1.0, 0.5));
        assert!(r.is_empty());
    }

    #[test]
    fn contained_polygon() {
        let outer = square(0.0, 0.0, 2.0);
        let inner = square(0.5, 0.5, 0.25);
        assert!((polygon_intersection(&outer, &inner).area() - 0.25).abs() < 1e-12);
        assert!((polygon_intersection(&inner, &outer).area() - 0.25).abs() < 1e-12);
    }
}

use super::{AxisBox, ConvexPolygon, Point, EPS_GEOM};
use crate::error::{Error, Result};

/// Rotated rectangle with four vertices in clockwise (image-convention)
/// order.
///
/// Stored in canonical form: vertex 0 is the topmost corner (smallest `y`,
/// ties broken by smallest `x`) and the remaining vertices follow clockwise on
/// screen, so the shoelace sum is positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    vertices: [Point; 4],
}

impl OrientedBox {
    /// Accepts the corners in either cyclic direction and any starting
    /// vertex. Fails unless they form a rectangle within tolerance.
    pub fn new(vertices: [Point; 4]) -> Result<Self> {
        if let Some(p) = vertices.iter().find(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("non-finite vertex {p:?}")));
        }
        let e: Vec<Point> = (0..4).map(|i| vertices[(i + 1) % 4] - vertices[i]).collect();
        let scale = e[0].norm().max(e[1].norm());
        if scale == 0.0 {
            return Err(Error::DegenerateInput("all corners coincide".into()));
        }
        let tol = EPS_GEOM * scale;
        for i in 0..4 {
            let (a, b) = (e[i], e[(i + 1) % 4]);
            if a.dot(b).abs() > tol * scale {
                return Err(Error::invalid("adjacent sides are not perpendicular"));
            }
            let opposite = e[(i + 2) % 4];
            if (a + opposite).norm() > tol {
                return Err(Error::invalid("opposite sides are not parallel and equal"));
            }
        }
        Ok(Self::from_vertices_unchecked(vertices))
    }

    /// Axis-aligned rectangles are exactly representable; the angle is in
    /// radians, measured clockwise on screen from the `+x` axis.
    pub fn from_center(center: Point, width: f64, height: f64, angle: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0) || !width.is_finite() || !height.is_finite() {
            return Err(Error::invalid(format!("rectangle extents must be positive, got {width}x{height}")));
        }
        let hw = 0.5 * width;
        let hh = 0.5 * height;
        let corners = [Point::new(-hw, -hh), Point::new(hw, -hh), Point::new(hw, hh), Point::new(-hw, hh)];
        Ok(Self::from_vertices_unchecked(corners.map(|p| center + p.rotate(angle))))
    }

    /// Canonicalizes without checking rectangularity. Zero-area boxes are
    /// allowed here and reported by [`OrientedBox::is_degenerate`].
    pub(crate) fn from_vertices_unchecked(mut vertices: [Point; 4]) -> Self {
        let mut shoelace = 0.0;
        for i in 0..4 {
            shoelace += vertices[i].cross(vertices[(i + 1) % 4]);
        }
        if shoelace < 0.0 {
            vertices.reverse();
        }
        let first = (0..4)
            .min_by(|&i, &j| {
                let (p, q) = (vertices[i], vertices[j]);
                p.y.total_cmp(&q.y).then(p.x.total_cmp(&q.x))
            })
            .unwrap();
        vertices.rotate_left(first);
        OrientedBox { vertices }
    }

    pub fn vertices(&self) -> &[Point; 4] {
        &self.vertices
    }

    /// Length of the side from vertex 0 to vertex 1.
    pub fn width(&self) -> f64 {
        self.vertices[0].distance(self.vertices[1])
    }

    /// Length of the side from vertex 1 to vertex 2.
    pub fn height(&self) -> f64 {
        self.vertices[1].distance(self.vertices[2])
    }

    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        (v[1] - v[0]).cross(v[2] - v[1]).abs()
    }

    pub fn center(&self) -> Point {
        (self.vertices[0] + self.vertices[2]) * 0.5
    }

    pub fn is_degenerate(&self) -> bool {
        let scale = self.width().max(self.height());
        scale == 0.0 || self.area() <= EPS_GEOM * scale * scale
    }

    pub fn to_polygon(&self) -> ConvexPolygon {
        ConvexPolygon::from(self)
    }

    /// Applies `f` to every vertex and re-canonicalizes.
    pub fn map_points(&self, f: impl Fn(Point) -> Point) -> OrientedBox {
        OrientedBox::from_vertices_unchecked(self.vertices.map(f))
    }
}

/// Convex hull by monotone chain, collinear points dropped. The result is in
/// the same orientation as [`ConvexPolygon`].
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    // Keeping only left turns in raw coordinates gives positive shoelace order.
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                if (b - a).cross(p - b) <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Minimum-area enclosing rectangle. The optimal rectangle has a side flush
/// with some hull edge, so each hull edge is tried as a caliper direction.
pub fn min_area_rect(points: &[Point]) -> Result<OrientedBox> {
    if let Some(p) = points.iter().find(|p| !p.is_finite()) {
        return Err(Error::invalid(format!("non-finite vertex {p:?}")));
    }
    let hull = convex_hull(points);
    let scale = hull.iter().flat_map(|p| hull.iter().map(move |q| p.distance(*q))).fold(0.0, f64::max);
    let hull_area = if hull.len() >= 3 { ConvexPolygon::from_vertices_unchecked(hull.clone()).area() } else { 0.0 };
    if hull.len() < 3 || hull_area <= EPS_GEOM * EPS_GEOM * scale * scale {
        return Err(Error::DegenerateInput("points are collinear".into()));
    }

    let n = hull.len();
    let mut best: Option<Caliper> = None;
    for i in 0..n {
        let edge = hull[(i + 1) % n] - hull[i];
        let u = edge * (1.0 / edge.norm());
        let v = Point::new(-u.y, u.x);
        let mut c = Caliper { origin: hull[i], u, v, u0: f64::MAX, u1: f64::MIN, v0: f64::MAX, v1: f64::MIN };
        for &p in &hull {
            let d = p - c.origin;
            let (a, b) = (d.dot(u), d.dot(v));
            c.u0 = c.u0.min(a);
            c.u1 = c.u1.max(a);
            c.v0 = c.v0.min(b);
            c.v1 = c.v1.max(b);
        }
        if best.as_ref().is_none_or(|b| c.area() < b.area()) {
            best = Some(c);
        }
    }
    let c = best.unwrap();
    Ok(OrientedBox::from_vertices_unchecked([c.at(c.u0, c.v0), c.at(c.u1, c.v0), c.at(c.u1, c.v1), c.at(c.u0, c.v1)]))
}

/// Extents of a point set in the frame `(u, v)` anchored at `origin`.
struct Caliper {
    origin: Point,
    u: Point,
    v: Point,
    u0: f64,
    u1: f64,
    v0: f64,
    v1: f64,
}

impl Caliper {
    fn area(&self) -> f64 {
        (self.u1 - self.u0) * (self.v1 - self.v0)
    }

    fn at(&self, a: f64, b: f64) -> Point {
        self.origin + self.u * a + self.v * b
    }
}

/// Tightest axis-aligned box containing the rectangle.
///
/// A degenerate axis-aligned sliver has zero extent along one axis; the
/// returned box then carries that zero extent.
pub fn enclosing_axis_box(r: &OrientedBox) -> AxisBox {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in r.vertices() {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    AxisBox { cx: 0.5 * (x0 + x1), cy: 0.5 * (y0 + y1), w: x1 - x0, h: y1 - y0 }
}

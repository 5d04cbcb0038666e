use super::{OrientedBox, Point, EPS_GEOM};
use crate::error::{Error, Result};

/// Convex polygon with positive shoelace orientation (see module docs).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
}

impl ConvexPolygon {
    /// Validates and, if needed, reverses `vertices` into the stored
    /// orientation. Collinear runs within tolerance are accepted.
    pub fn new(mut vertices: Vec<Point>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::invalid(format!("polygon needs at least 3 vertices, got {n}")));
        }
        if let Some(p) = vertices.iter().find(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("non-finite vertex {p:?}")));
        }
        for i in 0..n {
            for j in i + 1..n {
                if vertices[i] == vertices[j] {
                    return Err(Error::invalid(format!("repeated vertex {:?}", vertices[i])));
                }
            }
        }
        if signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        let scale = extent(&vertices).max(f64::MIN_POSITIVE);
        let tol = EPS_GEOM * scale * scale;
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if (b - a).cross(c - b) < -tol {
                return Err(Error::invalid("polygon is not convex"));
            }
        }
        // Same-sign turns still admit star polygons that wind more than once.
        let turning: f64 = (0..n)
            .map(|i| {
                let a = vertices[i];
                let b = vertices[(i + 1) % n];
                let c = vertices[(i + 2) % n];
                let (e0, e1) = (b - a, c - b);
                e0.cross(e1).atan2(e0.dot(e1))
            })
            .sum();
        if turning > 2.0 * std::f64::consts::PI + 1e-6 {
            return Err(Error::invalid("polygon winds more than once"));
        }
        Ok(ConvexPolygon { vertices })
    }

    /// Wraps vertices already known to be convex and correctly oriented.
    pub(crate) fn from_vertices_unchecked(vertices: Vec<Point>) -> Self {
        ConvexPolygon { vertices }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn into_vertices(self) -> Vec<Point> {
        self.vertices
    }

    pub fn area(&self) -> f64 {
        polygon_area(self)
    }

    /// True when `p` lies inside or on the boundary.
    pub fn contains(&self, p: Point) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            (b - a).cross(p - a) >= 0.0
        })
    }
}

impl From<&OrientedBox> for ConvexPolygon {
    fn from(r: &OrientedBox) -> Self {
        ConvexPolygon::from_vertices_unchecked(r.vertices().to_vec())
    }
}

fn signed_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    let mut acc = 0.0;
    for i in 0..n {
        let p = vertices[i];
        let q = vertices[(i + 1) % n];
        acc += p.x * q.y - q.x * p.y;
    }
    0.5 * acc
}

fn extent(vertices: &[Point]) -> f64 {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in vertices {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    (x1 - x0).max(y1 - y0)
}

/// Shoelace area. Collinear vertex sets give 0.
pub fn polygon_area(p: &ConvexPolygon) -> f64 {
    signed_area(&p.vertices).abs()
}

/// Intersection of two convex polygons by successive half-plane clipping
/// against each edge of `clip`. Returns `None` when the intersection has no
/// area.
pub fn clip_convex(subject: &ConvexPolygon, clip: &ConvexPolygon) -> Option<ConvexPolygon> {
    clip_vertices(&subject.vertices, &clip.vertices).map(ConvexPolygon::from_vertices_unchecked)
}

fn clip_vertices(subject: &[Point], clip: &[Point]) -> Option<Vec<Point>> {
    let mut output: Vec<Point> = subject.to_vec();
    let mut input: Vec<Point> = Vec::with_capacity(subject.len() + clip.len());
    let m = clip.len();
    for i in 0..m {
        if output.is_empty() {
            return None;
        }
        std::mem::swap(&mut input, &mut output);
        output.clear();

        let a = clip[i];
        let edge = clip[(i + 1) % m] - a;
        let mut prev = *input.last().unwrap();
        let mut prev_side = edge.cross(prev - a);
        for &cur in &input {
            let cur_side = edge.cross(cur - a);
            if cur_side >= 0.0 {
                if prev_side < 0.0 {
                    output.push(crossing(prev, cur, prev_side, cur_side));
                }
                output.push(cur);
            } else if prev_side >= 0.0 {
                output.push(crossing(prev, cur, prev_side, cur_side));
            }
            prev = cur;
            prev_side = cur_side;
        }
    }
    output.dedup();
    while output.len() > 1 && output.first() == output.last() {
        output.pop();
    }
    if output.len() < 3 || signed_area(&output) <= 0.0 {
        return None;
    }
    Some(output)
}

/// Point where segment `s -> e` crosses the clipping line, given the signed
/// distances (scaled) of its endpoints.
fn crossing(s: Point, e: Point, ds: f64, de: f64) -> Point {
    let t = ds / (ds - de);
    s + (e - s) * t
}

/// Rotated-box IOU via convex clipping and shoelace areas; 0 when disjoint.
pub fn iou_oriented(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let va = a.vertices();
    let vb = b.vertices();
    let inter = match clip_vertices(va, vb) {
        Some(poly) => signed_area(&poly),
        None => return 0.0,
    };
    let area_a = signed_area(va);
    let area_b = signed_area(vb);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(pts: &[(f64, f64)]) -> ConvexPolygon {
        ConvexPolygon::new(pts.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
    }

    fn unit_square() -> ConvexPolygon {
        poly(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
    }

    #[test]
    fn area_examples() {
        assert_eq!(polygon_area(&poly(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)])), 0.5);
        assert_eq!(polygon_area(&unit_square()), 1.0);
        assert_eq!(polygon_area(&poly(&[(0.0, 0.0), (3.0, 0.0), (3.0, 3.0), (0.0, 3.0)])), 9.0);
    }

    #[test]
    fn either_winding_is_accepted() {
        let cw = poly(&[(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)]);
        assert_eq!(cw.area(), 1.0);
        assert!(signed_area(cw.vertices()) > 0.0);
    }

    #[test]
    fn rejects_bad_polygons() {
        assert!(ConvexPolygon::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)]).is_err());
        // bow-tie
        assert!(ConvexPolygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ])
        .is_err());
        assert!(ConvexPolygon::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 0.0),]).is_err());
        // pentagram: all turns have the same sign but it winds twice
        let star: Vec<Point> = (0..5)
            .map(|i| {
                let t = std::f64::consts::TAU * (2 * i) as f64 / 5.0;
                Point::new(t.cos(), t.sin())
            })
            .collect();
        assert!(ConvexPolygon::new(star).is_err());
    }

    #[test]
    fn collinear_polygon_has_zero_area() {
        let p = ConvexPolygon::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 1.0), Point::new(2.0, 2.0)]).unwrap();
        assert_eq!(polygon_area(&p), 0.0);
    }

    #[test]
    fn clip_with_itself_is_identity() {
        let sq = unit_square();
        let c = clip_convex(&sq, &sq).unwrap();
        assert_eq!(c.vertices(), sq.vertices());
    }

    #[test]
    fn clip_shifted_square() {
        let a = unit_square();
        let b = poly(&[(0.5, 0.0), (1.5, 0.0), (1.5, 1.0), (0.5, 1.0)]);
        let c = clip_convex(&a, &b).unwrap();
        assert!((c.area() - 0.5).abs() < 1e-15);
        for p in c.vertices() {
            assert!(p.x >= 0.5 - 1e-15 && p.x <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn clip_disjoint_and_touching() {
        let a = unit_square();
        let far = poly(&[(5.0, 5.0), (6.0, 5.0), (6.0, 6.0), (5.0, 6.0)]);
        assert!(clip_convex(&a, &far).is_none());
        let touching = poly(&[(1.0, 0.0), (2.0, 0.0), (2.0, 1.0), (1.0, 1.0)]);
        assert!(clip_convex(&a, &touching).is_none());
    }

    #[test]
    fn clip_square_with_rotated_square_is_octagon() {
        let a = unit_square();
        let c = Point::new(0.5, 0.5);
        let rotated: Vec<Point> =
            a.vertices().iter().map(|&p| c + (p - c).rotate(std::f64::consts::FRAC_PI_4)).collect();
        let b = ConvexPolygon::new(rotated).unwrap();
        let inter = clip_convex(&a, &b).unwrap();
        assert_eq!(inter.vertices().len(), 8);
        // 2(√2 − 1)
        assert!((inter.area() - 0.828_427_124_746_190_1).abs() < 1e-12);
    }

    #[test]
    fn contains_boundary_and_interior() {
        let sq = unit_square();
        assert!(sq.contains(Point::new(0.5, 0.5)));
        assert!(sq.contains(Point::new(0.0, 0.5)));
        assert!(!sq.contains(Point::new(1.5, 0.5)));
    }
}

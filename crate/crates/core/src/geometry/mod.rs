//! Exact 2-D geometry for axis-aligned boxes, convex polygons and rotated
//! rectangles.
//!
//! Coordinates follow the image convention: `x` grows to the right and `y`
//! grows downward. A polygon whose shoelace sum is positive in these raw
//! coordinates is "counterclockwise" in mathematical orientation and appears
//! clockwise on screen; both [`ConvexPolygon`] and [`OrientedBox`] store their
//! vertices that way.

mod polygon;
mod rbox_code;
mod rect;

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use polygon::{clip_convex, iou_oriented, polygon_area, ConvexPolygon};
pub use rbox_code::{decode_rbox, encode_rbox, encode_rbox_clamped, Chirality, RBoxCode};
pub use rect::{convex_hull, enclosing_axis_box, min_area_rect, OrientedBox};

/// Tolerance for perpendicularity, parallelism and containment checks, in
/// normalized units. Checks on pixel-scale inputs multiply it by the size of
/// the objects involved.
pub const EPS_GEOM: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 2-D cross product.
    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    /// Rotates by `angle` radians about the origin.
    pub fn rotate(self, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point::new(x, y)
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Axis-aligned box stored as center and size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl AxisBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let b = AxisBox { cx, cy, w, h };
        if !(cx.is_finite() && cy.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::invalid(format!("non-finite box {b:?}")));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::invalid(format!("box extents must be positive, got {b:?}")));
        }
        Ok(b)
    }

    pub fn from_corners(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        AxisBox::new(0.5 * (x_min + x_max), 0.5 * (y_min + y_max), x_max - x_min, y_max - y_min)
    }

    /// `(x_min, y_min, x_max, y_max)`.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        let hw = 0.5 * self.w;
        let hh = 0.5 * self.h;
        (self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh)
    }

    pub fn area(&self) -> f64 {
        let (x0, y0, x1, y1) = self.corners();
        (x1 - x0) * (y1 - y0)
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        let (x0, y0, x1, y1) = self.corners();
        p.x >= x0 - tol && p.x <= x1 + tol && p.y >= y0 - tol && p.y <= y1 + tol
    }

    /// Scales coordinates and extents independently along each axis.
    pub fn scale(&self, sx: f64, sy: f64) -> AxisBox {
        AxisBox { cx: self.cx * sx, cy: self.cy * sy, w: self.w * sx, h: self.h * sy }
    }

    /// The box as an oriented rectangle, top-left corner first.
    pub fn to_oriented(&self) -> OrientedBox {
        let (x0, y0, x1, y1) = self.corners();
        OrientedBox::from_vertices_unchecked([
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ])
    }
}

/// Intersection over union of two axis-aligned boxes; 0 when disjoint.
pub fn iou_axis(a: &AxisBox, b: &AxisBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.corners();
    let (bx0, by0, bx1, by1) = b.corners();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(cx: f64, cy: f64, w: f64, h: f64) -> AxisBox {
        AxisBox::new(cx, cy, w, h).unwrap()
    }

    #[test]
    fn iou_axis_examples() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou_axis(&a, &a), 1.0);
        let b = bx(1.0, 0.0, 2.0, 2.0);
        assert!((iou_axis(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
        let c = bx(10.0, 10.0, 1.0, 1.0);
        assert_eq!(iou_axis(&a, &c), 0.0);
    }

    #[test]
    fn iou_axis_cocentered_formula() {
        let sizes: [(f64, f64); 4] = [(1.0, 2.0), (3.0, 0.5), (2.0, 2.0), (0.3, 7.0)];
        for &(w1, h1) in &sizes {
            for &(w2, h2) in &sizes {
                let overlap = w1.min(w2) * h1.min(h2);
                let expect = overlap / (w1 * h1 + w2 * h2 - overlap);
                let got = iou_axis(&bx(5.0, -2.0, w1, h1), &bx(5.0, -2.0, w2, h2));
                assert!((got - expect).abs() < 1e-12, "{w1}x{h1} vs {w2}x{h2}");
            }
        }
    }

    #[test]
    fn axis_box_rejects_nonpositive() {
        assert!(AxisBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(AxisBox::new(0.0, 0.0, 1.0, -1.0).is_err());
        assert!(AxisBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn touching_boxes_do_not_overlap() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        let b = bx(2.0, 0.0, 2.0, 2.0);
        assert_eq!(iou_axis(&a, &b), 0.0);
    }
}

//! The `(d1, d2, h)` code of a rotated rectangle relative to an axis-aligned
//! crop.
//!
//! The upper side of the rectangle runs up and to the right. Under
//! [`Chirality::LeftTop`] its first endpoint sits on the left edge of the crop
//! at depth `d1 * h_b` below the top-left corner and its second endpoint on
//! the top edge at `d2 * w_b` right of that corner. [`Chirality::TopRight`]
//! reads the same pair as a point on the top edge at `d1 * w_b` followed by a
//! point on the right edge at depth `d2 * h_b`. The rectangle then extends
//! clockwise from the upper side; `h` is its height as a fraction of the
//! largest height that stays inside the crop.
//!
//! An axis-aligned rectangle has no unique `(d1, d2)`; it is coded as
//! `(0, 0)` under the left-top reading, which decodes to the crop itself.

use serde::{Deserialize, Serialize};

use super::{AxisBox, OrientedBox, Point, EPS_GEOM};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RBoxCode {
    pub d1: f64,
    pub d2: f64,
    pub h: Option<f64>,
}

impl RBoxCode {
    pub fn new(d1: f64, d2: f64, h: Option<f64>) -> Result<Self> {
        let in_range = |v: f64| (0.0..=1.0).contains(&v);
        if !in_range(d1) || !in_range(d2) || h.is_some_and(|h| !in_range(h)) {
            return Err(Error::invalid(format!("code fields must lie in [0,1]: ({d1}, {d2}, {h:?})")));
        }
        Ok(RBoxCode { d1, d2, h })
    }

    /// Drops `h`, giving the two-term code.
    pub fn without_height(self) -> Self {
        RBoxCode { h: None, ..self }
    }

    pub fn is_three_term(&self) -> bool {
        self.h.is_some()
    }

    /// `[d1, d2]` or `[d1, d2, h]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.d1, self.d2];
        v.extend(self.h);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chirality {
    /// Upper side from the left edge to the top edge.
    LeftTop,
    /// Upper side from the top edge to the right edge.
    TopRight,
}

/// Upper-side endpoints, inward unit normal and maximal inscribed height.
/// `None` when the endpoints coincide.
fn frame(b: &AxisBox, d1: f64, d2: f64, chirality: Chirality) -> Option<(Point, Point, Point, f64)> {
    let (x0, y0, x1, _) = b.corners();
    let (w, h) = (b.w, b.h);
    let (start, end) = match chirality {
        Chirality::LeftTop => (Point::new(x0, y0 + d1 * h), Point::new(x0 + d2 * w, y0)),
        Chirality::TopRight => (Point::new(x0 + d1 * w, y0), Point::new(x1, y0 + d2 * h)),
    };
    let side = end - start;
    let len = side.norm();
    if len == 0.0 {
        return None;
    }
    // Clockwise on screen: turn the side direction by +90° in raw coordinates.
    let normal = Point::new(-side.y / len, side.x / len);
    // Each limit is the distance from an endpoint to the crop edge it moves
    // toward, divided by the normal's component in that direction.
    let limits: [(f64, f64); 2] = match chirality {
        // normal = (d1 h, d2 w)/len: end moves right, start moves down.
        Chirality::LeftTop => [((1.0 - d2) * w, normal.x), ((1.0 - d1) * h, normal.y)],
        // normal = (-d2 h, (1-d1) w)/len: start moves left, end moves down.
        Chirality::TopRight => [(d1 * w, -normal.x), ((1.0 - d2) * h, normal.y)],
    };
    let max_height =
        limits.iter().filter(|(_, rate)| *rate > 0.0).map(|(room, rate)| room / rate).fold(f64::INFINITY, f64::min);
    let max_height = if max_height.is_finite() { max_height.max(0.0) } else { 0.0 };
    Some((start, end, normal, max_height))
}

fn decode_one(b: &AxisBox, d1: f64, d2: f64, height_frac: f64, chirality: Chirality) -> OrientedBox {
    match frame(b, d1, d2, chirality) {
        Some((start, end, normal, max_height)) => {
            let offset = normal * (height_frac * max_height);
            OrientedBox::from_vertices_unchecked([start, end, end + offset, start + offset])
        }
        None => {
            let (x0, y0, x1, _) = b.corners();
            let y = y0 + height_frac * b.h;
            OrientedBox::from_vertices_unchecked([
                Point::new(x0, y0),
                Point::new(x1, y0),
                Point::new(x1, y),
                Point::new(x0, y),
            ])
        }
    }
}

/// Rectangles described by `code` inside `b`.
///
/// Without `h` both readings are returned at maximal height, left-top first.
/// With `h` a single left-top rectangle is returned. Degenerate codes yield
/// zero-area boxes (see [`OrientedBox::is_degenerate`]) rather than errors.
pub fn decode_rbox(b: &AxisBox, code: &RBoxCode) -> Vec<OrientedBox> {
    let (d1, d2) = (code.d1.clamp(0.0, 1.0), code.d2.clamp(0.0, 1.0));
    if d1 == 0.0 && d2 == 0.0 {
        let frac = code.h.unwrap_or(1.0);
        let r = decode_one(b, 0.0, 0.0, frac, Chirality::LeftTop);
        return match code.h {
            Some(_) => vec![r],
            None => vec![r, r],
        };
    }
    match code.h {
        Some(h) => vec![decode_one(b, d1, d2, h.clamp(0.0, 1.0), Chirality::LeftTop)],
        None => vec![decode_one(b, d1, d2, 1.0, Chirality::LeftTop), decode_one(b, d1, d2, 1.0, Chirality::TopRight)],
    }
}

/// Index of the side whose direction is closest to "up and to the right".
fn upper_side(r: &OrientedBox) -> Option<usize> {
    let v = r.vertices();
    (0..4)
        .filter_map(|i| {
            let e = v[(i + 1) % 4] - v[i];
            let len = e.norm();
            (len > 0.0).then(|| (i, (e.x - e.y) / len))
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

fn is_axis_aligned(side: Point) -> bool {
    let len = side.norm();
    side.x.abs() <= EPS_GEOM * len || side.y.abs() <= EPS_GEOM * len
}

fn height_fraction(b: &AxisBox, d1: f64, d2: f64, height: f64) -> f64 {
    match frame(b, d1, d2, Chirality::LeftTop) {
        Some((_, _, _, max_h)) if max_h > 0.0 => (height / max_h).clamp(0.0, 1.0),
        _ => 1.0,
    }
}

/// Three-term code of `r` relative to the crop `b`.
///
/// `r` must lie inside `b`, with its upper side starting on the left edge and
/// ending on the top edge (always true when `b` is the enclosing box of `r`).
/// Axis-aligned rectangles must span the crop's width from its top edge.
pub fn encode_rbox(r: &OrientedBox, b: &AxisBox) -> Result<RBoxCode> {
    if !(b.w > 0.0 && b.h > 0.0) {
        return Err(Error::invalid(format!("crop must have positive extents, got {b:?}")));
    }
    let tol = EPS_GEOM * b.w.max(b.h);
    if let Some(p) = r.vertices().iter().find(|p| !b.contains(**p, tol)) {
        return Err(Error::InconsistentInput(format!("vertex {p:?} lies outside the crop {b:?}")));
    }
    let (x0, y0, x1, _) = b.corners();
    let v = r.vertices();
    let Some(i) = upper_side(r) else {
        return Err(Error::DegenerateInput("rectangle has no extent".into()));
    };
    let (start, end, next) = (v[i], v[(i + 1) % 4], v[(i + 2) % 4]);

    if is_axis_aligned(end - start) {
        let (mut rx0, mut ry0, mut rx1, mut ry1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in v {
            rx0 = rx0.min(p.x);
            ry0 = ry0.min(p.y);
            rx1 = rx1.max(p.x);
            ry1 = ry1.max(p.y);
        }
        if (rx0 - x0).abs() > tol || (ry0 - y0).abs() > tol || (rx1 - x1).abs() > tol {
            return Err(Error::InconsistentInput(
                "axis-aligned rectangle must share the crop's left, top and right edges".into(),
            ));
        }
        return Ok(RBoxCode { d1: 0.0, d2: 0.0, h: Some(((ry1 - ry0) / b.h).clamp(0.0, 1.0)) });
    }

    if (start.x - x0).abs() > tol || (end.y - y0).abs() > tol {
        return Err(Error::InconsistentInput(format!(
            "upper side {start:?} -> {end:?} does not touch the crop's left and top edges"
        )));
    }
    let d1 = ((start.y - y0) / b.h).clamp(0.0, 1.0);
    let d2 = ((end.x - x0) / b.w).clamp(0.0, 1.0);
    let h = height_fraction(b, d1, d2, end.distance(next));
    Ok(RBoxCode { d1, d2, h: Some(h) })
}

/// Like [`encode_rbox`], but for crops that do not hug the rectangle (for
/// example after jittering). The upper side's supporting line is intersected
/// with the crop's left and top edges and every field is clamped to `[0,1]`.
pub fn encode_rbox_clamped(r: &OrientedBox, b: &AxisBox) -> Result<RBoxCode> {
    if let Ok(code) = encode_rbox(r, b) {
        return Ok(code);
    }
    if !(b.w > 0.0 && b.h > 0.0) {
        return Err(Error::invalid(format!("crop must have positive extents, got {b:?}")));
    }
    let v = r.vertices();
    let Some(i) = upper_side(r) else {
        return Err(Error::DegenerateInput("rectangle has no extent".into()));
    };
    let (start, end, next) = (v[i], v[(i + 1) % 4], v[(i + 2) % 4]);
    let (x0, y0, _, _) = b.corners();
    let side = end - start;

    if is_axis_aligned(side) {
        let (ry0, ry1) = v.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.y), hi.max(p.y)));
        let bottom = ry1.min(y0 + b.h);
        let top = ry0.max(y0);
        return Ok(RBoxCode { d1: 0.0, d2: 0.0, h: Some(((bottom - top) / b.h).clamp(0.0, 1.0)) });
    }

    let y_left = start.y + (x0 - start.x) * side.y / side.x;
    let x_top = start.x + (y0 - start.y) * side.x / side.y;
    let d1 = ((y_left - y0) / b.h).clamp(0.0, 1.0);
    let d2 = ((x_top - x0) / b.w).clamp(0.0, 1.0);
    let h = height_fraction(b, d1, d2, end.distance(next));
    Ok(RBoxCode { d1, d2, h: Some(h) })
}

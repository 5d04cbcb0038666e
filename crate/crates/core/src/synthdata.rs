//! Deterministic synthetic scenes of square-ish and elongated oriented
//! targets, plus a simulated detector for exercising the evaluation path.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    clip_convex, enclosing_axis_box, iou_axis, iou_oriented, AxisBox, ConvexPolygon, OrientedBox, Point,
};
use crate::metrics::{Detection, GroundTruthObject};

/// Placement attempts per object before giving up.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;
pub const DEFAULT_SPLIT_THRESHOLD: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeFamily {
    /// Labels and seals: rectangles with aspect in [1, 1.5].
    Square,
    /// Tapes: rectangles with aspect in [4, 12].
    Elongated,
    /// Irregular convex quadrilaterals.
    Blob,
}

impl ShapeFamily {
    fn default_aspect(self) -> [f64; 2] {
        match self {
            ShapeFamily::Square => [1.0, 1.5],
            ShapeFamily::Elongated => [4.0, 12.0],
            ShapeFamily::Blob => [1.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub name: String,
    /// Objects of this class per image.
    pub count: usize,
    pub family: ShapeFamily,
    /// Short side range in pixels.
    pub size: [f64; 2],
    /// Long/short ratio range; defaults to the family's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspect: Option<[f64; 2]>,
}

impl ClassSpec {
    pub fn aspect_range(&self) -> [f64; 2] {
        self.aspect.unwrap_or_else(|| self.family.default_aspect())
    }
}

fn default_images() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: f64,
    pub height: f64,
    pub classes: Vec<ClassSpec>,
    /// Largest rotated IOU allowed between any two objects.
    pub overlap_limit: f64,
    /// Optional cap on axis-box IOU between objects, so that every object
    /// survives suppression of overlapping detections.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox_overlap_limit: Option<f64>,
    #[serde(default = "default_images")]
    pub images: usize,
    #[serde(default)]
    pub seed: u64,
}

fn range_ok(r: [f64; 2], floor: f64) -> bool {
    r.iter().all(|v| v.is_finite()) && r[0] >= floor && r[0] <= r[1]
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::invalid(format!("width: must be positive, got {}", self.width)));
        }
        if !(self.height > 0.0 && self.height.is_finite()) {
            return Err(Error::invalid(format!("height: must be positive, got {}", self.height)));
        }
        if !(0.0..1.0).contains(&self.overlap_limit) {
            return Err(Error::invalid(format!("overlap_limit: must lie in [0, 1), got {}", self.overlap_limit)));
        }
        if let Some(l) = self.bbox_overlap_limit {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::invalid(format!("bbox_overlap_limit: must lie in [0, 1], got {l}")));
            }
        }
        for c in &self.classes {
            if c.name.is_empty() {
                return Err(Error::invalid("name: class names must be non-empty"));
            }
            if !range_ok(c.size, f64::MIN_POSITIVE) {
                return Err(Error::invalid(format!("size: bad range {:?} for class `{}`", c.size, c.name)));
            }
            if !range_ok(c.aspect_range(), 1.0) {
                return Err(Error::invalid(format!("aspect: bad range {:?} for class `{}`", c.aspect_range(), c.name)));
            }
        }
        for (i, c) in self.classes.iter().enumerate() {
            if self.classes[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::invalid(format!("name: duplicate class `{}`", c.name)));
            }
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneAnnotation {
    pub image_id: String,
    pub width: f64,
    pub height: f64,
    /// Seed the scene was drawn from.
    pub seed: u64,
    pub objects: Vec<GroundTruthObject>,
}

fn random_range(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// A candidate outline centered on the origin.
fn draw_shape(rng: &mut ChaCha8Rng, class: &ClassSpec) -> Option<Vec<Point>> {
    let short = random_range(rng, class.size);
    let long = short * random_range(rng, class.aspect_range());
    let angle = rng.random_range(0.0..PI);
    match class.family {
        ShapeFamily::Square | ShapeFamily::Elongated => {
            let r = OrientedBox::from_center(Point::new(0.0, 0.0), long, short, angle).ok()?;
            Some(r.vertices().to_vec())
        }
        ShapeFamily::Blob => {
            // corners of the rectangle, each pulled toward the center and
            // swung a little; non-convex draws are rejected by the caller
            let r = OrientedBox::from_center(Point::new(0.0, 0.0), long, short, angle).ok()?;
            Some(
                r.vertices()
                    .iter()
                    .map(|&p| (p * rng.random_range(0.6..=1.0)).rotate(rng.random_range(-0.25..=0.25)))
                    .collect(),
            )
        }
    }
}

fn place(rng: &mut ChaCha8Rng, outline: &[Point], width: f64, height: f64) -> Option<ConvexPolygon> {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in outline {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    if x1 - x0 > width || y1 - y0 > height {
        return None;
    }
    let cx = random_range(rng, [-x0, width - x1]);
    let cy = random_range(rng, [-y0, height - y1]);
    let shift = Point::new(cx, cy);
    ConvexPolygon::new(outline.iter().map(|&p| p + shift).collect()).ok()
}

/// Rejection-samples one scene. Objects are placed class by class in spec
/// order; every draw of shape or position counts as one attempt.
pub fn generate_scene(spec: &SceneSpec, image_id: &str, seed: u64) -> Result<SceneAnnotation> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut objects: Vec<GroundTruthObject> = Vec::new();
    for (class_idx, class) in spec.classes.iter().enumerate() {
        for _ in 0..class.count {
            let mut placed = None;
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let Some(outline) = draw_shape(&mut rng, class) else { continue };
                let Some(quad) = place(&mut rng, &outline, spec.width, spec.height) else { continue };
                let Ok(obj) = GroundTruthObject::from_quad(image_id, class_idx + 1, quad) else { continue };
                let clear = objects.iter().all(|o| {
                    iou_oriented(&o.rbox, &obj.rbox) <= spec.overlap_limit
                        && spec.bbox_overlap_limit.is_none_or(|l| iou_axis(&o.bbox, &obj.bbox) <= l)
                });
                if clear {
                    placed = Some(obj);
                    break;
                }
            }
            match placed {
                Some(obj) => objects.push(obj),
                None => return Err(Error::Capacity { class: class.name.clone(), attempts: MAX_PLACEMENT_ATTEMPTS }),
            }
        }
    }
    Ok(SceneAnnotation { image_id: image_id.to_owned(), width: spec.width, height: spec.height, seed, objects })
}

/// Per-scene seed: the spec seed's ChaCha stream `index`.
pub fn scene_seed(base: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index as u64);
    rng.random()
}

pub fn scene_id(index: usize) -> String {
    format!("img{index:05}")
}

/// All `spec.images` scenes, generated in parallel and returned in index
/// order.
pub fn generate_dataset(spec: &SceneSpec) -> Result<Vec<SceneAnnotation>> {
    spec.validate()?;
    (0..spec.images).into_par_iter().map(|i| generate_scene(spec, &scene_id(i), scene_seed(spec.seed, i))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Approach {
    /// One box per target.
    A,
    /// Long targets are cut into near-square parts.
    B,
}

/// Approach B cuts each object whose minimal rectangle has aspect above
/// `threshold` into `ceil(aspect / threshold)` equal slabs across its long
/// side. Each part is the object clipped to its slab and is re-annotated
/// from scratch. Approach A returns the objects unchanged.
pub fn apply_approach(
    objects: &[GroundTruthObject],
    approach: Approach,
    threshold: f64,
) -> Result<Vec<GroundTruthObject>> {
    if threshold.is_nan() || threshold <= 1.0 {
        return Err(Error::invalid(format!("split threshold must exceed 1, got {threshold}")));
    }
    if approach == Approach::A {
        return Ok(objects.to_vec());
    }
    let mut out = Vec::with_capacity(objects.len());
    for obj in objects {
        let (w, h) = (obj.rbox.width(), obj.rbox.height());
        let (long, short) = (w.max(h), w.min(h));
        let aspect = long / short;
        // slack so that an exact multiple is not pushed up by rounding
        let parts = (aspect / threshold - 1e-9).ceil().max(1.0) as usize;
        if parts == 1 {
            out.push(obj.clone());
            continue;
        }
        let v = obj.rbox.vertices();
        // start corner and the long and short side vectors
        let (along, across) = if w >= h { (v[1] - v[0], v[3] - v[0]) } else { (v[3] - v[0], v[1] - v[0]) };
        for k in 0..parts {
            let t0 = k as f64 / parts as f64;
            let t1 = (k + 1) as f64 / parts as f64;
            let a = v[0] + along * t0;
            let b = v[0] + along * t1;
            let slab = ConvexPolygon::new(vec![a, b, b + across, a + across])?;
            let Some(piece) = clip_convex(&obj.quad, &slab) else { continue };
            out.push(GroundTruthObject::from_quad(obj.image_id.clone(), obj.class_id, piece)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScoreModel {
    Constant(f64),
    /// Uniform in `[low, high]`.
    Uniform(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corruption {
    pub drop_rate: f64,
    /// Relative size of center shifts and log-size changes.
    pub jitter: f64,
    pub score: ScoreModel,
}

impl Corruption {
    pub const IDENTITY: Corruption = Corruption { drop_rate: 0.0, jitter: 0.0, score: ScoreModel::Constant(1.0) };
}

/// Simulated detector output for one scene.
///
/// Each object is dropped with probability `drop_rate`. A survivor's
/// rectangle has its center moved by up to `jitter` of its width and height
/// along its own axes and each side scaled by `exp(U(-jitter, jitter))`; the
/// angle is kept. Zero jitter reproduces the ground-truth boxes exactly.
pub fn corrupt_predictions(ann: &SceneAnnotation, corruption: &Corruption, seed: u64) -> Result<Vec<Detection>> {
    let Corruption { drop_rate, jitter, score } = *corruption;
    if !(0.0..=1.0).contains(&drop_rate) {
        return Err(Error::invalid(format!("drop rate must lie in [0, 1], got {drop_rate}")));
    }
    if !(0.0..=1.0).contains(&jitter) {
        return Err(Error::invalid(format!("jitter must lie in [0, 1], got {jitter}")));
    }
    let score_ok = |s: f64| (0.0..=1.0).contains(&s);
    let valid_score = match score {
        ScoreModel::Constant(s) => score_ok(s),
        ScoreModel::Uniform(lo, hi) => score_ok(lo) && score_ok(hi) && lo <= hi,
    };
    if !valid_score {
        return Err(Error::invalid(format!("scores must lie in [0, 1], got {score:?}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(ann.objects.len());
    for obj in &ann.objects {
        if rng.random::<f64>() < drop_rate {
            continue;
        }
        let rbox = if jitter > 0.0 {
            let v = obj.rbox.vertices();
            let (along, across) = (v[1] - v[0], v[3] - v[0]);
            let (w, h) = (along.norm(), across.norm());
            let mut u = || rng.random_range(-jitter..=jitter);
            let center = obj.rbox.center() + along * u() + across * u();
            let angle = along.y.atan2(along.x);
            OrientedBox::from_center(center, w * u().exp(), h * u().exp(), angle)?
        } else {
            obj.rbox
        };
        let bbox: AxisBox = if jitter > 0.0 { enclosing_axis_box(&rbox) } else { obj.bbox };
        let score = match score {
            ScoreModel::Constant(s) => s,
            ScoreModel::Uniform(lo, hi) if lo == hi => lo,
            ScoreModel::Uniform(lo, hi) => rng.random_range(lo..=hi),
        };
        out.push(Detection { image_id: obj.image_id.clone(), class_id: obj.class_id, score, bbox, rbox: Some(rbox) });
    }
    Ok(out)
}

const PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
];

/// Binary PPM with each object's quad filled in a flat class color on black.
/// For inspection only.
pub fn render_ppm(ann: &SceneAnnotation) -> Vec<u8> {
    let (w, h) = (ann.width.ceil() as usize, ann.height.ceil() as usize);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let header = out.len();
    out.resize(header + w * h * 3, 0);
    for obj in &ann.objects {
        let color = PALETTE[(obj.class_id - 1) % PALETTE.len()];
        let (x0, y0, x1, y1) = obj.bbox.corners();
        let xs = (x0.floor().max(0.0) as usize)..(x1.ceil().min(w as f64) as usize);
        for y in (y0.floor().max(0.0) as usize)..(y1.ceil().min(h as f64) as usize) {
            for x in xs.clone() {
                if obj.quad.contains(Point::new(x as f64 + 0.5, y as f64 + 0.5)) {
                    let at = header + (y * w + x) * 3;
                    out[at..at + 3].copy_from_slice(&color);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{min_area_rect, polygon_area, EPS_GEOM};

    fn class(name: &str, count: usize, family: ShapeFamily, size: [f64; 2]) -> ClassSpec {
        ClassSpec { name: name.into(), count, family, size, aspect: None }
    }

    fn spec() -> SceneSpec {
        SceneSpec {
            width: 300.0,
            height: 200.0,
            classes: vec![
                class("label", 4, ShapeFamily::Square, [15.0, 30.0]),
                class("tape", 3, ShapeFamily::Elongated, [5.0, 10.0]),
                class("rust", 2, ShapeFamily::Blob, [10.0, 20.0]),
            ],
            overlap_limit: 0.0,
            bbox_overlap_limit: None,
            images: 3,
            seed: 7,
        }
    }

    #[test]
    fn zero_counts_give_empty_scene() {
        let mut s = spec();
        s.classes.iter_mut().for_each(|c| c.count = 0);
        assert!(generate_scene(&s, "x", 1).unwrap().objects.is_empty());
    }

    #[test]
    fn scenes_are_reproducible() {
        let s = spec();
        assert_eq!(generate_dataset(&s).unwrap(), generate_dataset(&s).unwrap());
        let a = generate_scene(&s, "x", 1).unwrap();
        let b = generate_scene(&s, "x", 2).unwrap();
        assert_ne!(a.objects, b.objects);
    }

    #[test]
    fn scene_respects_bounds_and_overlap() {
        for ann in generate_dataset(&spec()).unwrap() {
            assert_eq!(ann.objects.len(), 9);
            for (i, o) in ann.objects.iter().enumerate() {
                for p in o.quad.vertices() {
                    assert!(p.x >= -1e-9 && p.x <= 300.0 + 1e-9 && p.y >= -1e-9 && p.y <= 200.0 + 1e-9);
                }
                assert_eq!(min_area_rect(o.quad.vertices()).unwrap(), o.rbox);
                assert_eq!(enclosing_axis_box(&o.rbox), o.bbox);
                for other in &ann.objects[..i] {
                    assert!(iou_oriented(&o.rbox, &other.rbox) <= EPS_GEOM);
                }
            }
        }
    }

    #[test]
    fn families_follow_their_aspect_ranges() {
        for ann in generate_dataset(&spec()).unwrap() {
            for o in ann.objects.iter().filter(|o| o.class_id < 3) {
                let (w, h) = (o.rbox.width(), o.rbox.height());
                let aspect = w.max(h) / w.min(h);
                let range = spec().classes[o.class_id - 1].aspect_range();
                assert!(aspect >= range[0] - 1e-6 && aspect <= range[1] + 1e-6, "{aspect}");
            }
        }
    }

    #[test]
    fn crowded_scene_reports_class() {
        let s = SceneSpec {
            width: 20.0,
            height: 20.0,
            classes: vec![class("big", 3, ShapeFamily::Square, [12.0, 12.0])],
            overlap_limit: 0.0,
            bbox_overlap_limit: None,
            images: 1,
            seed: 0,
        };
        match generate_scene(&s, "x", 0) {
            Err(Error::Capacity { class, attempts }) => {
                assert_eq!(class, "big");
                assert_eq!(attempts, MAX_PLACEMENT_ATTEMPTS);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_spec_names_the_field() {
        let mut s = spec();
        s.overlap_limit = 1.0;
        assert!(s.validate().unwrap_err().to_string().contains("overlap_limit"));
        let json = r#"{"width":1,"height":1,"classes":[],"overlap_limit":0,"colour":3}"#;
        assert!(serde_json::from_str::<SceneSpec>(json).unwrap_err().to_string().contains("colour"));
    }

    fn tape(aspect: f64) -> GroundTruthObject {
        let r = OrientedBox::from_center(Point::new(50.0, 50.0), 10.0 * aspect, 10.0, 0.3).unwrap();
        let quad = ConvexPolygon::new(r.vertices().to_vec()).unwrap();
        GroundTruthObject::from_quad("x", 1, quad).unwrap()
    }

    #[test]
    fn approach_b_splits_long_objects() {
        let t = tape(5.0);
        assert_eq!(apply_approach(std::slice::from_ref(&t), Approach::A, 2.5).unwrap(), vec![t.clone()]);
        let parts = apply_approach(std::slice::from_ref(&t), Approach::B, 2.5).unwrap();
        assert_eq!(parts.len(), 2);
        let mut total = 0.0;
        for p in &parts {
            let (w, h) = (p.rbox.width(), p.rbox.height());
            assert!((w.max(h) / w.min(h) - 2.5).abs() < 1e-9);
            total += polygon_area(&p.quad);
        }
        assert!((total - polygon_area(&t.quad)).abs() < 1e-9);
        let square = tape(1.2);
        assert_eq!(apply_approach(std::slice::from_ref(&square), Approach::B, 2.5).unwrap(), vec![square]);
        assert_eq!(apply_approach(&[tape(5.1)], Approach::B, 2.5).unwrap().len(), 3);
        assert!(apply_approach(&[], Approach::B, 1.0).is_err());
    }

    #[test]
    fn identity_corruption_copies_ground_truth() {
        let ann = generate_scene(&spec(), "x", 3).unwrap();
        let dets = corrupt_predictions(&ann, &Corruption::IDENTITY, 0).unwrap();
        assert_eq!(dets.len(), ann.objects.len());
        for (d, o) in dets.iter().zip(&ann.objects) {
            assert_eq!((d.bbox, d.rbox, d.class_id, d.score), (o.bbox, Some(o.rbox), o.class_id, 1.0));
        }
    }

    #[test]
    fn corruption_drops_and_scores() {
        let ann = generate_scene(&spec(), "x", 3).unwrap();
        let all_dropped = Corruption { drop_rate: 1.0, ..Corruption::IDENTITY };
        assert!(corrupt_predictions(&ann, &all_dropped, 0).unwrap().is_empty());
        let noisy = Corruption { drop_rate: 0.0, jitter: 0.2, score: ScoreModel::Uniform(0.3, 0.9) };
        let dets = corrupt_predictions(&ann, &noisy, 5).unwrap();
        assert_eq!(dets, corrupt_predictions(&ann, &noisy, 5).unwrap());
        assert!(dets.iter().all(|d| (0.3..=0.9).contains(&d.score)));
        assert!(corrupt_predictions(&ann, &Corruption { drop_rate: 1.5, ..noisy }, 0).is_err());
    }

    #[test]
    fn raster_has_header_and_color() {
        let ann = generate_scene(&spec(), "x", 3).unwrap();
        let img = render_ppm(&ann);
        let header = b"P6\n300 200\n255\n";
        assert!(img.starts_with(header));
        assert_eq!(img.len(), header.len() + 300 * 200 * 3);
        assert!(img[header.len()..].iter().any(|&b| b != 0));
    }
}

//! JSON-lines file formats. Every non-empty file starts with a
//! `{"classes": [...]}` line; class ids are 1-based positions in that list.

use std::collections::BTreeSet;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::Failure;
use crate::anchors::BoxShape;
use crate::geometry::{AxisBox, ConvexPolygon, OrientedBox, Point, RBoxCode};
use crate::metrics::{select_rbox, Detection, GroundTruthObject};
use crate::synthdata::SceneAnnotation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassHeader {
    classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectRecord {
    pub class: String,
    pub quad: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRecord {
    pub image_id: String,
    pub width: f64,
    pub height: f64,
    pub objects: Vec<ObjectRecord>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotationFile {
    pub classes: Vec<String>,
    pub images: Vec<ImageRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub class: String,
    pub score: f64,
    /// `[cx, cy, w, h]`
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rbox: Option<Vec<[f64; 2]>>,
    /// `[d1, d2]` or `[d1, d2, h]` relative to `bbox`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub image_id: String,
    pub detections: Vec<DetectionRecord>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionFile {
    pub classes: Vec<String>,
    pub images: Vec<PredictionRecord>,
}

/// A parsed detection; `code` is kept for error reports on code-form input.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedDetection {
    pub detection: Detection,
    pub code: Option<RBoxCode>,
}

/// Model written by `cluster` and read by `encode`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CentroidFile {
    pub k: usize,
    pub seed: u64,
    pub miou: f64,
    pub centroids: Vec<BoxShape>,
}

impl CentroidFile {
    pub fn read(path: &Path) -> Result<Self, Failure> {
        let text = read_text(path)?;
        let file: CentroidFile =
            serde_json::from_str(&text).map_err(|e| Failure::bad(format!("{}: {e}", path.display())))?;
        for c in &file.centroids {
            BoxShape::new(c.w, c.h).map_err(|e| Failure::bad(format!("{}: {e}", path.display())))?;
        }
        if file.centroids.is_empty() {
            return Err(Failure::bad(format!("{}: no centroids", path.display())));
        }
        Ok(file)
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::bad(format!("cannot read {}: {e}", path.display())))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::internal(format!("cannot write {}: {e}", path.display())))
}

pub(crate) fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string(value).map_err(|e| Failure::internal(e.to_string()))
}

/// Header plus records; blank lines are skipped. An empty file has no
/// classes and no records.
fn parse_lines<T: DeserializeOwned>(text: &str, origin: &str) -> Result<(Vec<String>, Vec<T>), Failure> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, first)) = lines.next() else {
        return Ok((Vec::new(), Vec::new()));
    };
    let header: ClassHeader = serde_json::from_str(first)
        .map_err(|e| Failure::bad(format!("{origin}: first line must be the class list: {e}")))?;
    let mut seen = BTreeSet::new();
    if let Some(dup) = header.classes.iter().find(|c| !seen.insert(c.as_str())) {
        return Err(Failure::bad(format!("{origin}: duplicate class `{dup}`")));
    }
    let records = lines
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| Failure::bad(format!("{origin}:{}: {e}", n + 1))))
        .collect::<Result<Vec<T>, _>>()?;
    Ok((header.classes, records))
}

fn render_lines<T: Serialize>(classes: &[String], records: &[T]) -> Result<String, Failure> {
    if records.is_empty() {
        return Ok(String::new());
    }
    let mut out = to_json(&ClassHeader { classes: classes.to_vec() })?;
    out.push('\n');
    for r in records {
        out.push_str(&to_json(r)?);
        out.push('\n');
    }
    Ok(out)
}

fn class_index(classes: &[String], name: &str, origin: &str) -> Result<usize, Failure> {
    classes
        .iter()
        .position(|c| c == name)
        .map(|i| i + 1)
        .ok_or_else(|| Failure::bad(format!("{origin}: class `{name}` is not in the class list {classes:?}")))
}

fn points(raw: &[[f64; 2]]) -> Vec<Point> {
    raw.iter().map(|&p| Point::from(p)).collect()
}

impl AnnotationFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, Failure> {
        let (classes, images) = parse_lines::<ImageRecord>(text, origin)?;
        let file = AnnotationFile { classes, images };
        file.validate(origin)?;
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self, Failure> {
        Self::parse(&read_text(path)?, &path.display().to_string())
    }

    fn validate(&self, origin: &str) -> Result<(), Failure> {
        let mut ids = BTreeSet::new();
        for img in &self.images {
            if !ids.insert(img.image_id.as_str()) {
                return Err(Failure::bad(format!("{origin}: duplicate image_id `{}`", img.image_id)));
            }
            if !(img.width > 0.0 && img.width.is_finite() && img.height > 0.0 && img.height.is_finite()) {
                return Err(Failure::bad(format!(
                    "{origin}: image `{}` needs positive width and height",
                    img.image_id
                )));
            }
            for obj in &img.objects {
                class_index(&self.classes, &obj.class, origin)?;
                if obj.quad.len() != 4 || obj.quad.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Failure::bad(format!(
                        "{origin}: image `{}`: quad must have 4 finite points",
                        img.image_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn render(&self) -> Result<String, Failure> {
        render_lines(&self.classes, &self.images)
    }

    pub fn from_scenes(classes: Vec<String>, scenes: &[SceneAnnotation]) -> Self {
        let images = scenes
            .iter()
            .map(|s| ImageRecord {
                image_id: s.image_id.clone(),
                width: s.width,
                height: s.height,
                objects: s
                    .objects
                    .iter()
                    .map(|o| ObjectRecord {
                        class: classes[o.class_id - 1].clone(),
                        quad: o.quad.vertices().iter().map(|&p| p.into()).collect(),
                    })
                    .collect(),
            })
            .collect();
        AnnotationFile { classes, images }
    }

    /// Each image as a scene, with derived rectangles and boxes.
    pub fn scenes(&self) -> Result<Vec<SceneAnnotation>, Failure> {
        self.images
            .iter()
            .map(|img| {
                let objects = img
                    .objects
                    .iter()
                    .map(|o| {
                        let class_id = class_index(&self.classes, &o.class, &img.image_id)?;
                        let quad = ConvexPolygon::new(points(&o.quad))
                            .map_err(|e| Failure::bad(format!("image `{}`: {e}", img.image_id)))?;
                        GroundTruthObject::from_quad(img.image_id.clone(), class_id, quad)
                            .map_err(|e| Failure::bad(format!("image `{}`: {e}", img.image_id)))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(SceneAnnotation {
                    image_id: img.image_id.clone(),
                    width: img.width,
                    height: img.height,
                    seed: 0,
                    objects,
                })
            })
            .collect()
    }
}

impl PredictionFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, Failure> {
        let (classes, images) = parse_lines::<PredictionRecord>(text, origin)?;
        let mut ids = BTreeSet::new();
        for img in &images {
            if !ids.insert(img.image_id.as_str()) {
                return Err(Failure::bad(format!("{origin}: duplicate image_id `{}`", img.image_id)));
            }
        }
        Ok(PredictionFile { classes, images })
    }

    pub fn read(path: &Path) -> Result<Self, Failure> {
        Self::parse(&read_text(path)?, &path.display().to_string())
    }

    pub fn render(&self) -> Result<String, Failure> {
        render_lines(&self.classes, &self.images)
    }

    /// Detections in file order. Code-form detections carry the rectangle
    /// their code selects inside `bbox`.
    pub fn detections(&self) -> Result<Vec<ParsedDetection>, Failure> {
        let mut out = Vec::new();
        for img in &self.images {
            for (n, d) in img.detections.iter().enumerate() {
                let at = format!("image `{}` detection {n}", img.image_id);
                let class_id = class_index(&self.classes, &d.class, &at)?;
                if !(0.0..=1.0).contains(&d.score) {
                    return Err(Failure::bad(format!("{at}: score must lie in [0, 1], got {}", d.score)));
                }
                let [cx, cy, w, h] = d.bbox;
                let bbox = AxisBox::new(cx, cy, w, h).map_err(|e| Failure::bad(format!("{at}: {e}")))?;
                let (rbox, code) = match (&d.rbox, &d.code) {
                    (Some(_), Some(_)) => return Err(Failure::bad(format!("{at}: give rbox or code, not both"))),
                    (Some(quad), None) => {
                        let corners: [Point; 4] = points(quad)
                            .try_into()
                            .map_err(|_| Failure::bad(format!("{at}: rbox must have 4 points")))?;
                        let r = OrientedBox::new(corners).map_err(|e| Failure::bad(format!("{at}: {e}")))?;
                        (Some(r), None)
                    }
                    (None, Some(values)) => {
                        let code = match *values.as_slice() {
                            [d1, d2] => RBoxCode::new(d1, d2, None),
                            [d1, d2, h] => RBoxCode::new(d1, d2, Some(h)),
                            _ => return Err(Failure::bad(format!("{at}: code must have 2 or 3 values"))),
                        }
                        .map_err(|e| Failure::bad(format!("{at}: {e}")))?;
                        (Some(select_rbox(&bbox, &code)), Some(code))
                    }
                    (None, None) => (None, None),
                };
                out.push(ParsedDetection {
                    detection: Detection { image_id: img.image_id.clone(), class_id, score: d.score, bbox, rbox },
                    code,
                });
            }
        }
        Ok(out)
    }

    /// Groups detections by image, one record per id in `image_ids` order.
    pub fn from_detections(
        classes: Vec<String>,
        image_ids: &[String],
        dets: &[Detection],
        codes: Option<&[RBoxCode]>,
    ) -> Self {
        let images = image_ids
            .iter()
            .map(|id| PredictionRecord {
                image_id: id.clone(),
                detections: dets
                    .iter()
                    .enumerate()
                    .filter(|(_, d)| &d.image_id == id)
                    .map(|(i, d)| DetectionRecord {
                        class: classes[d.class_id - 1].clone(),
                        score: d.score,
                        bbox: [d.bbox.cx, d.bbox.cy, d.bbox.w, d.bbox.h],
                        rbox: match codes {
                            Some(_) => None,
                            None => d.rbox.map(|r| r.vertices().iter().map(|&p| p.into()).collect()),
                        },
                        code: codes.map(|c| c[i].to_vec()),
                    })
                    .collect(),
            })
            .collect();
        PredictionFile { classes, images }
    }
}

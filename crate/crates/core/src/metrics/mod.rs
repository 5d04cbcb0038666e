//! Post-processing of raw detections and evaluation against ground truth.

mod eval;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    decode_rbox, enclosing_axis_box, iou_axis, iou_oriented, min_area_rect, AxisBox, ConvexPolygon, OrientedBox,
    RBoxCode,
};

pub use eval::{
    assign_detections, average_precision, evaluate, format_report, ApMode, ClassRow, EvalConfig, EvalReport,
};

pub const DEFAULT_CONFIDENCE: f64 = 0.7;
pub const DEFAULT_NMS_IOU: f64 = 0.45;
pub const DEFAULT_EVAL_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: String,
    /// 1-based; 0 is background.
    pub class_id: usize,
    pub score: f64,
    pub bbox: AxisBox,
    pub rbox: Option<OrientedBox>,
}

impl Detection {
    /// The rotated box if present, otherwise the axis box as a rectangle.
    pub fn oriented(&self) -> OrientedBox {
        self.rbox.unwrap_or_else(|| self.bbox.to_oriented())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthObject {
    pub image_id: String,
    pub class_id: usize,
    pub quad: ConvexPolygon,
    pub bbox: AxisBox,
    pub rbox: OrientedBox,
}

impl GroundTruthObject {
    /// Derives the minimal rectangle of `quad` and its enclosing axis box.
    pub fn from_quad(image_id: impl Into<String>, class_id: usize, quad: ConvexPolygon) -> Result<Self> {
        let rbox = min_area_rect(quad.vertices())?;
        let bbox = enclosing_axis_box(&rbox);
        Ok(GroundTruthObject { image_id: image_id.into(), class_id, quad, bbox, rbox })
    }
}

/// Keeps detections scoring at least `threshold`, in input order.
pub fn filter_confidence(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    dets.iter().filter(|d| d.score >= threshold).cloned().collect()
}

/// Greedy per-class suppression; returns surviving indices in input order.
/// Higher score goes first, equal scores prefer the lower index, and a
/// detection is suppressed when its axis IOU with a kept detection of the same
/// class and image exceeds `iou_threshold`.
pub fn nms_indices(dets: &[Detection], iou_threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let d = &dets[i];
        let suppressed = kept.iter().any(|&k| {
            let o = &dets[k];
            o.class_id == d.class_id && o.image_id == d.image_id && iou_axis(&o.bbox, &d.bbox) > iou_threshold
        });
        if !suppressed {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}

pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    nms_indices(dets, iou_threshold).into_iter().map(|i| dets[i].clone()).collect()
}

/// Mean absolute error.
pub fn mae(pred: &[f64], gt: &[f64]) -> Result<f64> {
    Error::check_len(pred.len(), gt.len())?;
    if pred.is_empty() {
        return Err(Error::invalid("mean absolute error of empty sequences"));
    }
    Ok(pred.iter().zip(gt).map(|(p, g)| (p - g).abs()).sum::<f64>() / pred.len() as f64)
}

/// The rectangle a code stands for inside `crop`: the single decode for
/// three-term codes, the larger of the two candidates for two-term codes.
pub fn select_rbox(crop: &AxisBox, code: &RBoxCode) -> OrientedBox {
    decode_rbox(crop, code)
        .into_iter()
        .reduce(|best, r| if r.area() > best.area() { r } else { best })
        .expect("decode yields at least one box")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodedMatch {
    pub crop: AxisBox,
    pub code: RBoxCode,
    pub gt: OrientedBox,
}

/// Mean rotated IOU of decoded codes against their matched ground truth; 0
/// for no pairs.
pub fn mriou_of_variant(pairs: &[CodedMatch]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let total: f64 = pairs.iter().map(|p| iou_oriented(&select_rbox(&p.crop, &p.code), &p.gt)).sum();
    total / pairs.len() as f64
}

/// Per-component MAE of predicted codes against reference codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeMae {
    pub d1: f64,
    pub d2: f64,
    pub h: Option<f64>,
    pub average: f64,
    pub pairs: usize,
}

pub fn code_mae(pred: &[RBoxCode], gt: &[RBoxCode]) -> Result<CodeMae> {
    Error::check_len(pred.len(), gt.len())?;
    let d1 = mae(&pred.iter().map(|c| c.d1).collect::<Vec<_>>(), &gt.iter().map(|c| c.d1).collect::<Vec<_>>())?;
    let d2 = mae(&pred.iter().map(|c| c.d2).collect::<Vec<_>>(), &gt.iter().map(|c| c.d2).collect::<Vec<_>>())?;
    let heights: Option<(Vec<f64>, Vec<f64>)> = pred.iter().zip(gt).map(|(p, g)| Some((p.h?, g.h?))).collect();
    let h = match heights {
        Some((p, g)) => Some(mae(&p, &g)?),
        None => None,
    };
    let flat_p: Vec<f64> = pred.iter().flat_map(|c| c.to_vec()).collect();
    let flat_g: Vec<f64> = gt.iter().flat_map(|c| c.to_vec()).collect();
    let average = mae(&flat_p, &flat_g)?;
    Ok(CodeMae { d1, d2, h, average, pairs: pred.len() })
}

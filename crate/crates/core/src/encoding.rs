//! Ground-truth to default-box matching, box-delta targets, hard-negative
//! selection and direct RBox regression targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    enclosing_axis_box, encode_rbox_clamped, iou_axis, min_area_rect, AxisBox, ConvexPolygon, RBoxCode,
};

pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.5;
pub const DEFAULT_NEGATIVE_RATIO: f64 = 3.0;
pub const DEFAULT_JITTER: f64 = 0.1;

/// Offsets of a box relative to a prior box: center shift in units of the
/// prior's size, log size ratio.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoxDelta {
    pub t_cx: f64,
    pub t_cy: f64,
    pub t_w: f64,
    pub t_h: f64,
}

impl BoxDelta {
    pub fn to_array(self) -> [f64; 4] {
        [self.t_cx, self.t_cy, self.t_w, self.t_h]
    }

    pub fn from_array([t_cx, t_cy, t_w, t_h]: [f64; 4]) -> Self {
        BoxDelta { t_cx, t_cy, t_w, t_h }
    }
}

pub fn encode_delta(g: &AxisBox, d: &AxisBox) -> Result<BoxDelta> {
    if !(d.w > 0.0 && d.h > 0.0) {
        return Err(Error::invalid(format!("prior box must have positive extents, got {d:?}")));
    }
    if !(g.w > 0.0 && g.h > 0.0) {
        return Err(Error::invalid(format!("target box must have positive extents, got {g:?}")));
    }
    Ok(BoxDelta { t_cx: (g.cx - d.cx) / d.w, t_cy: (g.cy - d.cy) / d.h, t_w: (g.w / d.w).ln(), t_h: (g.h / d.h).ln() })
}

pub fn decode_delta(t: &BoxDelta, d: &AxisBox) -> AxisBox {
    AxisBox { cx: t.t_cx * d.w + d.cx, cy: t.t_cy * d.h + d.cy, w: d.w * t.t_w.exp(), h: d.h * t.t_h.exp() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub gt: usize,
    pub default: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Sorted by default-box index.
    pub pairs: Vec<MatchedPair>,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
    gt_for_default: Vec<Option<usize>>,
}

impl MatchResult {
    pub fn gt_for_default(&self, default: usize) -> Option<usize> {
        self.gt_for_default.get(default).copied().flatten()
    }

    pub fn num_defaults(&self) -> usize {
        self.gt_for_default.len()
    }

    pub fn mean_iou(&self) -> f64 {
        if self.pairs.is_empty() {
            return 0.0;
        }
        self.pairs.iter().map(|p| p.iou).sum::<f64>() / self.pairs.len() as f64
    }
}

/// Every ground truth first claims its best default box, the globally
/// highest IOU going first so that a contested box goes to the ground truth
/// that overlaps it most. Every remaining default box whose best IOU reaches
/// `threshold` is then matched to that best ground truth. Ties go to the lower
/// index.
pub fn match_boxes(gts: &[AxisBox], defaults: &[AxisBox], threshold: f64) -> Result<MatchResult> {
    if defaults.is_empty() {
        return Err(Error::invalid("no default boxes to match against"));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("match threshold must lie in (0,1), got {threshold}")));
    }
    if gts.len() > defaults.len() {
        return Err(Error::invalid(format!(
            "{} ground truths cannot each claim one of {} default boxes",
            gts.len(),
            defaults.len()
        )));
    }
    let ious: Vec<Vec<f64>> = gts.iter().map(|g| defaults.iter().map(|d| iou_axis(g, d)).collect()).collect();

    let mut gt_for_default: Vec<Option<usize>> = vec![None; defaults.len()];
    let mut pair_iou: Vec<f64> = vec![0.0; defaults.len()];
    let mut gt_done = vec![false; gts.len()];
    for _ in 0..gts.len() {
        let mut best: Option<(usize, usize, f64)> = None;
        for (j, row) in ious.iter().enumerate() {
            if gt_done[j] {
                continue;
            }
            for (i, &v) in row.iter().enumerate() {
                if gt_for_default[i].is_none() && best.is_none_or(|b| v > b.2) {
                    best = Some((j, i, v));
                }
            }
        }
        let (j, i, v) = best.expect("more defaults than ground truths");
        gt_done[j] = true;
        gt_for_default[i] = Some(j);
        pair_iou[i] = v;
    }

    for i in 0..defaults.len() {
        if gt_for_default[i].is_some() {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (j, row) in ious.iter().enumerate() {
            if best.is_none_or(|b| row[i] > b.1) {
                best = Some((j, row[i]));
            }
        }
        if let Some((j, v)) = best {
            if v >= threshold {
                gt_for_default[i] = Some(j);
                pair_iou[i] = v;
            }
        }
    }

    let mut pairs = Vec::new();
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for (i, g) in gt_for_default.iter().enumerate() {
        match g {
            Some(j) => {
                pairs.push(MatchedPair { gt: *j, default: i, iou: pair_iou[i] });
                positives.push(i);
            }
            None => negatives.push(i),
        }
    }
    Ok(MatchResult { pairs, positives, negatives, gt_for_default })
}

/// Keeps the `⌊ratio · positive_count⌋` negatives with the highest loss (all
/// of them if fewer exist). Equal losses prefer the lower index. The result is
/// sorted by index.
pub fn select_hard_negatives(losses: &[(usize, f64)], positive_count: usize, ratio: f64) -> Result<Vec<usize>> {
    if !ratio.is_finite() || ratio <= 0.0 {
        return Err(Error::invalid(format!("negative ratio must be positive, got {ratio}")));
    }
    let budget = ((ratio * positive_count as f64).floor() as usize).min(losses.len());
    let mut order: Vec<(usize, f64)> = losses.to_vec();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut picked: Vec<usize> = order[..budget].iter().map(|(i, _)| *i).collect();
    picked.sort_unstable();
    Ok(picked)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegressionVariant {
    /// `(d1, d2)`
    TwoTerm,
    /// `(d1, d2, h)`
    ThreeTerm,
}

/// Sub-image the RBox regressor sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crop {
    pub image_id: String,
    pub bbox: AxisBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RBoxTarget {
    pub crop: Crop,
    pub code: RBoxCode,
    pub variant: RegressionVariant,
}

/// Regression targets for each ground-truth quad.
///
/// The crop is the enclosing box of the quad's minimal rectangle, with each of
/// its four corners moved by up to `jitter` times the box size along each
/// axis before re-enclosing. When the rectangle pokes out of the jittered crop
/// the code comes from [`encode_rbox_clamped`].
pub fn build_rbox_targets(
    image_id: &str,
    quads: &[ConvexPolygon],
    jitter: f64,
    variant: RegressionVariant,
    seed: u64,
) -> Result<Vec<RBoxTarget>> {
    if !(0.0..0.5).contains(&jitter) {
        return Err(Error::invalid(format!("jitter must lie in [0, 0.5), got {jitter}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(quads.len());
    for quad in quads {
        let rbox = min_area_rect(quad.vertices())?;
        let b = enclosing_axis_box(&rbox);
        let crop = if jitter > 0.0 {
            let (x0, y0, x1, y1) = b.corners();
            let corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)];
            let (mut nx0, mut ny0, mut nx1, mut ny1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
            for (x, y) in corners {
                let px = x + rng.random_range(-jitter..=jitter) * b.w;
                let py = y + rng.random_range(-jitter..=jitter) * b.h;
                nx0 = nx0.min(px);
                ny0 = ny0.min(py);
                nx1 = nx1.max(px);
                ny1 = ny1.max(py);
            }
            AxisBox::from_corners(nx0, ny0, nx1, ny1)?
        } else {
            b
        };
        let code = encode_rbox_clamped(&rbox, &crop)?;
        let code = match variant {
            RegressionVariant::TwoTerm => code.without_height(),
            RegressionVariant::ThreeTerm => code,
        };
        out.push(RBoxTarget { crop: Crop { image_id: image_id.to_owned(), bbox: crop }, code, variant });
    }
    Ok(out)
}

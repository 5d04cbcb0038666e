use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{Detection, GroundTruthObject, DEFAULT_EVAL_IOU};
use crate::error::{Error, Result};
use crate::geometry::{iou_axis, iou_oriented};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ApMode {
    /// Area under the precision envelope at every recall step.
    #[default]
    AllPoints,
    /// Mean of the precision envelope at recall 0, 0.1, ..., 1.
    ElevenPoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    /// Match and score with rotated IOU; adds the mRIOU column.
    pub use_rbox: bool,
    pub ap_mode: ApMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { iou_threshold: DEFAULT_EVAL_IOU, use_rbox: false, ap_mode: ApMode::AllPoints }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class_id: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub recall: f64,
    pub precision: f64,
    pub ap: f64,
    pub miou: f64,
    pub mriou: Option<f64>,
}

/// Per-class rows plus unweighted class means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ClassRow>,
    pub recall: f64,
    pub precision: f64,
    pub map: f64,
    pub miou: f64,
    pub mriou: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Average precision from a ranked list of hit flags.
pub fn average_precision(hits: &[bool], num_gt: usize, mode: ApMode) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut recall = Vec::with_capacity(hits.len());
    let mut precision = Vec::with_capacity(hits.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &hit in hits {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    // envelope: best precision at this recall or any higher one
    let mut envelope = precision.clone();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    match mode {
        ApMode::AllPoints => {
            let mut ap = 0.0;
            let mut prev_recall = 0.0;
            for (r, p) in recall.iter().zip(&envelope) {
                if *r > prev_recall {
                    ap += (r - prev_recall) * p;
                    prev_recall = *r;
                }
            }
            ap
        }
        ApMode::ElevenPoint => {
            let total: f64 = (0..=10)
                .map(|t| {
                    let level = t as f64 / 10.0;
                    recall.iter().zip(&envelope).find(|(r, _)| **r >= level - 1e-12).map_or(0.0, |(_, p)| *p)
                })
                .sum();
            total / 11.0
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

fn check_classes(dets: &[Detection], gts: &[GroundTruthObject], num_classes: usize) -> Result<()> {
    let unknown: BTreeSet<usize> = dets
        .iter()
        .map(|d| d.class_id)
        .chain(gts.iter().map(|g| g.class_id))
        .filter(|&c| c == 0 || c > num_classes)
        .collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(Error::UnknownClass(unknown.into_iter().collect()))
    }
}

/// Ranked detection indices of one class and the greedy assignment of each.
struct ClassAssignment {
    order: Vec<usize>,
    matched: Vec<Option<(usize, f64)>>,
    num_gt: usize,
}

fn assign_class(dets: &[Detection], gts: &[GroundTruthObject], class_id: usize, cfg: &EvalConfig) -> ClassAssignment {
    let class_gts: Vec<usize> = (0..gts.len()).filter(|&k| gts[k].class_id == class_id).collect();
    let mut by_image: HashMap<&str, Vec<usize>> = HashMap::new();
    for &k in &class_gts {
        by_image.entry(gts[k].image_id.as_str()).or_default().push(k);
    }
    let mut order: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].class_id == class_id).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));

    let mut taken = vec![false; gts.len()];
    let mut matched = Vec::with_capacity(order.len());
    for &i in &order {
        let d = &dets[i];
        let d_rbox = cfg.use_rbox.then(|| d.oriented());
        let mut best: Option<(usize, f64)> = None;
        for &k in by_image.get(d.image_id.as_str()).map(Vec::as_slice).unwrap_or(&[]) {
            if taken[k] {
                continue;
            }
            let iou = match &d_rbox {
                Some(r) => iou_oriented(r, &gts[k].rbox),
                None => iou_axis(&d.bbox, &gts[k].bbox),
            };
            if best.is_none_or(|b| iou > b.1) {
                best = Some((k, iou));
            }
        }
        match best {
            Some((k, iou)) if iou >= cfg.iou_threshold => {
                taken[k] = true;
                matched.push(Some((k, iou)));
            }
            _ => matched.push(None),
        }
    }
    ClassAssignment { order, matched, num_gt: class_gts.len() }
}

/// The ground truth each detection is credited with, as `(index into gts,
/// iou)`, or `None` for a false positive. Uses the same matching as
/// [`evaluate`].
pub fn assign_detections(
    dets: &[Detection],
    gts: &[GroundTruthObject],
    num_classes: usize,
    cfg: &EvalConfig,
) -> Result<Vec<Option<(usize, f64)>>> {
    check_classes(dets, gts, num_classes)?;
    let mut out = vec![None; dets.len()];
    let classes: BTreeSet<usize> = dets.iter().map(|d| d.class_id).collect();
    for class_id in classes {
        let a = assign_class(dets, gts, class_id, cfg);
        for (i, m) in a.order.into_iter().zip(a.matched) {
            out[i] = m;
        }
    }
    Ok(out)
}

/// Scores detections against ground truth for class ids `1..=num_classes`.
///
/// Within a class, detections are visited by descending score (ties by
/// input order); each takes the unmatched ground truth of its image with the
/// highest IOU and is a true positive when that IOU reaches the threshold.
/// Rows cover every class that has ground truth or detections. Precision with
/// no detections is 0.
pub fn evaluate(
    dets: &[Detection],
    gts: &[GroundTruthObject],
    num_classes: usize,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    check_classes(dets, gts, num_classes)?;
    let present: BTreeSet<usize> = dets.iter().map(|d| d.class_id).chain(gts.iter().map(|g| g.class_id)).collect();

    let mut rows = Vec::with_capacity(present.len());
    for class_id in present {
        let a = assign_class(dets, gts, class_id, cfg);
        let hits: Vec<bool> = a.matched.iter().map(Option::is_some).collect();
        let mut axis_ious = Vec::new();
        let mut rotated_ious = Vec::new();
        for (&i, m) in a.order.iter().zip(&a.matched) {
            if let Some((k, iou)) = *m {
                axis_ious.push(iou_axis(&dets[i].bbox, &gts[k].bbox));
                if cfg.use_rbox {
                    rotated_ious.push(iou);
                }
            }
        }

        let tp = axis_ious.len();
        let fp = a.order.len() - tp;
        let fn_ = a.num_gt - tp;
        rows.push(ClassRow {
            class_id,
            tp,
            fp,
            fn_,
            recall: ratio(tp, tp + fn_),
            precision: ratio(tp, tp + fp),
            ap: average_precision(&hits, a.num_gt, cfg.ap_mode),
            miou: mean(&axis_ious),
            mriou: cfg.use_rbox.then(|| mean(&rotated_ious)),
        });
    }

    let column = |f: fn(&ClassRow) -> f64| mean(&rows.iter().map(f).collect::<Vec<_>>());
    Ok(EvalReport {
        recall: column(|r| r.recall),
        precision: column(|r| r.precision),
        map: column(|r| r.ap),
        miou: column(|r| r.miou),
        mriou: cfg.use_rbox.then(|| column(|r| r.mriou.unwrap_or(0.0))),
        tp: rows.iter().map(|r| r.tp).sum(),
        fp: rows.iter().map(|r| r.fp).sum(),
        fn_: rows.iter().map(|r| r.fn_).sum(),
        rows,
    })
}

/// Aligned text table: one row per class, then the class means.
pub fn format_report(report: &EvalReport, class_names: &[String]) -> String {
    let name_of = |id: usize| class_names.get(id - 1).cloned().unwrap_or_else(|| format!("class{id}"));
    let width = report.rows.iter().map(|r| name_of(r.class_id).len()).chain([7]).max().unwrap();
    let with_r = report.mriou.is_some();
    let mut out = format!("{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}", "Class", "R", "P", "AP", "mIOU");
    if with_r {
        out.push_str(&format!("  {:>6}", "mRIOU"));
    }
    out.push_str(&format!("  {:>6}  {:>6}  {:>6}\n", "TP", "FP", "FN"));
    let line = |out: &mut String,
                name: &str,
                r: f64,
                p: f64,
                ap: f64,
                miou: f64,
                mriou: Option<f64>,
                counts: (usize, usize, usize)| {
        out.push_str(&format!("{name:<width$}  {r:>6.4}  {p:>6.4}  {ap:>6.4}  {miou:>6.4}"));
        if let Some(m) = mriou {
            out.push_str(&format!("  {m:>6.4}"));
        }
        out.push_str(&format!("  {:>6}  {:>6}  {:>6}\n", counts.0, counts.1, counts.2));
    };
    for r in &report.rows {
        line(&mut out, &name_of(r.class_id), r.recall, r.precision, r.ap, r.miou, r.mriou, (r.tp, r.fp, r.fn_));
    }
    line(
        &mut out,
        "average",
        report.recall,
        report.precision,
        report.map,
        report.miou,
        report.mriou,
        (report.tp, report.fp, report.fn_),
    );
    out
}

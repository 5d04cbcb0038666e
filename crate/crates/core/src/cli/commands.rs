use std::f64::consts::PI;
use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::formats::{read_text, to_json, write_text, AnnotationFile, CentroidFile, PredictionFile};
use super::{
    BenchArgs, ClusterArgs, EncodeArgs, EvaluateArgs, Failure, GenerateArgs, ModeArg, SimulateArgs, EXIT_INTERNAL,
    EXIT_OK,
};
use crate::anchors::{
    format_report as format_cluster_report, generate_default_boxes, hand_picked_shapes, kmeans_shapes_with,
    miou_report, BoxShape, DefaultBoxSet, KMeansConfig, SSD_ASPECT_RATIOS, SSD_BASELINE_SCALES,
};
use crate::encoding::{build_rbox_targets, encode_delta, match_boxes, RegressionVariant};
use crate::geometry::{encode_rbox, encode_rbox_clamped, iou_oriented, AxisBox, OrientedBox, Point};
use crate::metrics::{
    assign_detections, code_mae, evaluate as evaluate_detections, filter_confidence, format_report, nms_indices,
    ApMode, CodeMae, Detection, EvalConfig, EvalReport, GroundTruthObject,
};
use crate::synthdata::{
    apply_approach, corrupt_predictions, generate_dataset, render_ppm, scene_seed, Approach, Corruption,
    SceneAnnotation, SceneSpec, ScoreModel, DEFAULT_SPLIT_THRESHOLD,
};

fn approach(mode: ModeArg) -> Approach {
    match mode {
        ModeArg::A => Approach::A,
        ModeArg::B => Approach::B,
    }
}

pub(super) fn generate(a: &GenerateArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let text = read_text(&a.spec)?;
    let mut spec: SceneSpec =
        serde_json::from_str(&text).map_err(|e| Failure::bad(format!("{}: {e}", a.spec.display())))?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    let scenes = generate_dataset(&spec)?;
    let file = AnnotationFile::from_scenes(spec.class_names(), &scenes);
    write_text(&a.out, &file.render()?)?;
    if let Some(dir) = &a.raster_dir {
        std::fs::create_dir_all(dir).map_err(|e| Failure::internal(format!("cannot create {}: {e}", dir.display())))?;
        for s in &scenes {
            let path = dir.join(format!("{}.ppm", s.image_id));
            std::fs::write(&path, render_ppm(s))
                .map_err(|e| Failure::internal(format!("cannot write {}: {e}", path.display())))?;
        }
    }
    writeln!(out, "images: {}", scenes.len())?;
    for (i, name) in spec.class_names().iter().enumerate() {
        let n: usize = scenes.iter().map(|s| s.objects.iter().filter(|o| o.class_id == i + 1).count()).sum();
        writeln!(out, "{name}: {n}")?;
    }
    Ok(EXIT_OK)
}

fn parse_score(raw: &str) -> Result<ScoreModel, Failure> {
    let bad = || Failure::bad(format!("score: expected a number or LOW,HIGH, got `{raw}`"));
    let values: Vec<f64> = raw.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
    match *values.as_slice() {
        [s] => Ok(ScoreModel::Constant(s)),
        [lo, hi] => Ok(ScoreModel::Uniform(lo, hi)),
        _ => Err(bad()),
    }
}

pub(super) fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let ann = AnnotationFile::read(&a.annotations)?;
    let scenes = ann.scenes()?;
    let corruption = Corruption { drop_rate: a.drop, jitter: a.jitter, score: parse_score(&a.score)? };
    let per_scene = scenes
        .par_iter()
        .enumerate()
        .map(|(i, s)| corrupt_predictions(s, &corruption, scene_seed(a.seed, i)))
        .collect::<Result<Vec<_>, _>>()?;
    let dets: Vec<Detection> = per_scene.into_iter().flatten().collect();
    let codes = if a.codes {
        let codes = dets
            .iter()
            .map(|d| encode_rbox(&d.oriented(), &d.bbox))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Failure::internal(format!("encoding simulated detection: {e}")))?;
        Some(codes)
    } else {
        None
    };
    let ids: Vec<String> = scenes.iter().map(|s| s.image_id.clone()).collect();
    let file = PredictionFile::from_detections(ann.classes.clone(), &ids, &dets, codes.as_deref());
    write_text(&a.out, &file.render()?)?;
    writeln!(out, "detections: {}", dets.len())?;
    Ok(EXIT_OK)
}

/// Axis box sizes relative to the image.
fn normalized_shapes(scenes: &[SceneAnnotation], mode: ModeArg) -> Result<Vec<BoxShape>, Failure> {
    let mut shapes = Vec::new();
    for s in scenes {
        for o in apply_approach(&s.objects, approach(mode), DEFAULT_SPLIT_THRESHOLD)? {
            shapes.push(BoxShape::new((o.bbox.w / s.width).min(1.0), (o.bbox.h / s.height).min(1.0))?);
        }
    }
    Ok(shapes)
}

pub(super) fn cluster(a: &ClusterArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let ann = AnnotationFile::read(&a.annotations)?;
    let shapes = normalized_shapes(&ann.scenes()?, a.mode)?;
    if shapes.is_empty() {
        return Err(Failure::bad(format!("{}: no boxes to cluster", a.annotations.display())));
    }
    let cfg = KMeansConfig { restarts: a.restarts, ..KMeansConfig::new(a.k, a.seed) };
    let model = kmeans_shapes_with(&shapes, &cfg)?;

    let mut sets = vec![(format!("Clustering (k={})", a.k), model.centroids.clone())];
    if !a.no_baseline {
        let baseline = match &a.baseline {
            Some(path) => {
                let raw: Vec<[f64; 2]> = serde_json::from_str(&read_text(path)?)
                    .map_err(|e| Failure::bad(format!("{}: {e}", path.display())))?;
                let set = raw.iter().map(|&[w, h]| BoxShape::new(w, h)).collect::<Result<Vec<_>, _>>()?;
                ("Hand-picked".to_string(), set)
            }
            None => {
                ("Hand-picked (SSD-style)".to_string(), hand_picked_shapes(&SSD_BASELINE_SCALES, &SSD_ASPECT_RATIOS)?)
            }
        };
        sets.push(baseline);
    }
    let rows = miou_report(&shapes, &sets)?;
    write!(out, "{}", format_cluster_report(&rows))?;

    let sidecar = CentroidFile { k: a.k, seed: a.seed, miou: rows[0].miou, centroids: model.centroids };
    write_text(&a.centroids, &(to_json(&sidecar)? + "\n"))?;
    Ok(EXIT_OK)
}

fn parse_grids(raw: &str) -> Result<Vec<(usize, usize)>, Failure> {
    raw.split(',')
        .map(|g| {
            let g = g.trim();
            let parsed = match g.split_once('x') {
                Some((r, c)) => r.parse().ok().zip(c.parse().ok()),
                None => g.parse().ok().map(|n| (n, n)),
            };
            parsed.ok_or_else(|| Failure::bad(format!("grids: cannot read `{g}`")))
        })
        .collect()
}

#[derive(Serialize)]
struct MatchRecord {
    default: usize,
    gt: usize,
    iou: f64,
    delta: [f64; 4],
}

#[derive(Serialize)]
struct TargetRecord {
    gt: usize,
    class: String,
    /// `[cx, cy, w, h]`
    crop: [f64; 4],
    code: Vec<f64>,
}

#[derive(Serialize)]
struct EncodedImage {
    image_id: String,
    objects: usize,
    positives: usize,
    negatives: usize,
    hard_negative_budget: usize,
    mean_iou: f64,
    matches: Vec<MatchRecord>,
    targets: Vec<TargetRecord>,
}

pub(super) fn encode(a: &EncodeArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let ann = AnnotationFile::read(&a.annotations)?;
    let model = CentroidFile::read(&a.centroids)?;
    let set = DefaultBoxSet::new(model.centroids, parse_grids(&a.grids)?)?;
    if !(a.ratio >= 0.0 && a.ratio.is_finite()) {
        return Err(Failure::bad(format!("ratio: must be non-negative, got {}", a.ratio)));
    }
    let variant = if a.two_term { RegressionVariant::TwoTerm } else { RegressionVariant::ThreeTerm };

    let mut scenes = ann.scenes()?;
    scenes.sort_by(|x, y| x.image_id.cmp(&y.image_id));
    let records = scenes
        .par_iter()
        .enumerate()
        .map(|(i, s)| -> Result<EncodedImage, Failure> {
            let at = |e: crate::Error| Failure::bad(format!("image `{}`: {e}", s.image_id));
            let objects = apply_approach(&s.objects, approach(a.mode), DEFAULT_SPLIT_THRESHOLD)?;
            let defaults = generate_default_boxes(&set, (s.width, s.height));
            let gts: Vec<AxisBox> = objects.iter().map(|o| o.bbox).collect();
            let m = match_boxes(&gts, &defaults, a.threshold).map_err(at)?;
            let matches = m
                .pairs
                .iter()
                .map(|p| {
                    let delta = encode_delta(&gts[p.gt], &defaults[p.default]).map_err(at)?;
                    Ok(MatchRecord { default: p.default, gt: p.gt, iou: p.iou, delta: delta.to_array() })
                })
                .collect::<Result<Vec<_>, Failure>>()?;
            let quads: Vec<_> = objects.iter().map(|o| o.quad.clone()).collect();
            let targets = build_rbox_targets(&s.image_id, &quads, a.jitter, variant, scene_seed(a.seed, i))
                .map_err(at)?
                .into_iter()
                .enumerate()
                .map(|(gt, t)| {
                    let b = t.crop.bbox;
                    TargetRecord {
                        gt,
                        class: ann.classes[objects[gt].class_id - 1].clone(),
                        crop: [b.cx, b.cy, b.w, b.h],
                        code: t.code.to_vec(),
                    }
                })
                .collect();
            let budget = ((a.ratio * m.positives.len() as f64).floor() as usize).min(m.negatives.len());
            Ok(EncodedImage {
                image_id: s.image_id.clone(),
                objects: objects.len(),
                positives: m.positives.len(),
                negatives: m.negatives.len(),
                hard_negative_budget: budget,
                mean_iou: m.mean_iou(),
                matches,
                targets,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut text = String::new();
    for r in &records {
        text.push_str(&to_json(r)?);
        text.push('\n');
    }
    write_text(&a.out, &text)?;

    let sum = |f: fn(&EncodedImage) -> usize| records.iter().map(f).sum::<usize>();
    let pairs: Vec<f64> = records.iter().flat_map(|r| r.matches.iter().map(|m| m.iou)).collect();
    let mean_iou = if pairs.is_empty() { 0.0 } else { pairs.iter().sum::<f64>() / pairs.len() as f64 };
    writeln!(out, "images: {}", records.len())?;
    writeln!(out, "default boxes per image: {}", set.len())?;
    writeln!(out, "objects: {}", sum(|r| r.objects))?;
    writeln!(out, "positives: {}", sum(|r| r.positives))?;
    writeln!(out, "negatives: {}", sum(|r| r.negatives))?;
    writeln!(out, "hard negatives kept: {}", sum(|r| r.hard_negative_budget))?;
    writeln!(out, "mean matched IOU: {mean_iou:.4}")?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct StageRows<'a> {
    stage: &'a str,
    detections: usize,
    report: &'a EvalReport,
}

#[derive(Serialize)]
struct EvaluationRows<'a> {
    stages: Vec<StageRows<'a>>,
    code_mae: Option<CodeMae>,
}

pub(super) fn evaluate(a: &EvaluateArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let ann = AnnotationFile::read(&a.annotations)?;
    let preds = PredictionFile::read(&a.predictions)?;
    if !preds.classes.is_empty() && preds.classes != ann.classes {
        return Err(Failure::bad(format!(
            "class lists differ: annotations {:?}, predictions {:?}",
            ann.classes, preds.classes
        )));
    }
    for (name, v, lo_open) in [("conf", a.conf, false), ("iou", a.iou, true), ("nms", a.nms, false)] {
        let ok = if lo_open { v > 0.0 && v <= 1.0 } else { (0.0..=1.0).contains(&v) };
        if !ok {
            return Err(Failure::bad(format!("{name}: out of range, got {v}")));
        }
    }
    let gts: Vec<GroundTruthObject> = ann.scenes()?.into_iter().flat_map(|s| s.objects).collect();
    let parsed = preds.detections()?;
    let cfg = EvalConfig {
        iou_threshold: a.iou,
        use_rbox: a.rbox,
        ap_mode: if a.eleven_point { ApMode::ElevenPoint } else { ApMode::AllPoints },
    };
    let num_classes = ann.classes.len();

    let confident: Vec<usize> = (0..parsed.len()).filter(|&i| parsed[i].detection.score >= a.conf).collect();
    let stage1: Vec<Detection> =
        filter_confidence(&parsed.iter().map(|p| p.detection.clone()).collect::<Vec<_>>(), a.conf);
    let kept: Vec<usize> = nms_indices(&stage1, a.nms).into_iter().map(|i| confident[i]).collect();
    let stage2: Vec<Detection> = kept.iter().map(|&i| parsed[i].detection.clone()).collect();
    let pre = evaluate_detections(&stage1, &gts, num_classes, &cfg)?;
    let post = evaluate_detections(&stage2, &gts, num_classes, &cfg)?;

    // codes of matched detections against the ground truth re-encoded in
    // the detection's own box
    let assigned = assign_detections(&stage2, &gts, num_classes, &cfg)?;
    let (mut pred_codes, mut gt_codes) = (Vec::new(), Vec::new());
    for (j, m) in assigned.iter().enumerate() {
        let (Some(code), Some((k, _))) = (parsed[kept[j]].code, m) else { continue };
        let mut truth = encode_rbox_clamped(&gts[*k].rbox, &stage2[j].bbox)?;
        if !code.is_three_term() {
            truth = truth.without_height();
        }
        pred_codes.push(code);
        gt_codes.push(truth);
    }
    let mae = if pred_codes.is_empty() { None } else { Some(code_mae(&pred_codes, &gt_codes)?) };

    let mut text = format!("confidence >= {}: {} detections\n", a.conf, stage1.len());
    text.push_str(&format_report(&pre, &ann.classes));
    text.push_str(&format!("\nafter NMS at {}: {} detections\n", a.nms, stage2.len()));
    text.push_str(&format_report(&post, &ann.classes));
    if let Some(m) = &mae {
        let h = m.h.map_or("-".to_string(), |h| format!("{h:.4}"));
        text.push_str(&format!(
            "\ncode MAE over {} matches: d1 {:.4}  d2 {:.4}  h {h}  average {:.4}\n",
            m.pairs, m.d1, m.d2, m.average
        ));
    }
    write!(out, "{text}")?;
    if let Some(path) = &a.report {
        write_text(path, &text)?;
    }
    if let Some(path) = &a.rows {
        let rows = EvaluationRows {
            stages: vec![
                StageRows { stage: "confidence", detections: stage1.len(), report: &pre },
                StageRows { stage: "nms", detections: stage2.len(), report: &post },
            ],
            code_mae: mae,
        };
        let json = serde_json::to_string_pretty(&rows).map_err(|e| Failure::internal(e.to_string()))?;
        write_text(path, &(json + "\n"))?;
    }
    Ok(EXIT_OK)
}

pub const BENCH_TARGET: f64 = 50_000.0;
pub const BENCH_FLOOR: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchResult {
    pub evaluations: u64,
    pub seconds: f64,
    pub per_second: f64,
}

/// Evaluates rotated IOU over `pairs` random, mostly overlapping box pairs
/// on the current thread until at least `min_seconds` have passed.
pub fn bench_iou_oriented(pairs: usize, min_seconds: f64, seed: u64) -> BenchResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_box = |center: Point, rng: &mut ChaCha8Rng| {
        OrientedBox::from_center(
            center,
            rng.random_range(1.0..5.0),
            rng.random_range(1.0..5.0),
            rng.random_range(0.0..PI),
        )
        .expect("positive extents")
    };
    let boxes: Vec<(OrientedBox, OrientedBox)> = (0..pairs.max(1))
        .map(|_| {
            let c = Point::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
            let a = random_box(c, &mut rng);
            let offset = Point::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            (a, random_box(c + offset, &mut rng))
        })
        .collect();
    let start = Instant::now();
    let mut evaluations = 0u64;
    let mut sink = 0.0;
    loop {
        for (a, b) in &boxes {
            sink += iou_oriented(black_box(a), black_box(b));
        }
        evaluations += boxes.len() as u64;
        if start.elapsed().as_secs_f64() >= min_seconds {
            break;
        }
    }
    black_box(sink);
    let seconds = start.elapsed().as_secs_f64();
    BenchResult { evaluations, seconds, per_second: evaluations as f64 / seconds }
}

pub(super) fn bench(a: &BenchArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    if !(a.seconds >= 0.0 && a.seconds.is_finite()) {
        return Err(Failure::bad(format!("seconds: must be non-negative, got {}", a.seconds)));
    }
    let r = bench_iou_oriented(a.pairs, a.seconds, a.seed);
    writeln!(
        out,
        "iou_oriented: {} evaluations in {:.3} s = {:.0} per second (target {BENCH_TARGET:.0})",
        r.evaluations, r.seconds, r.per_second
    )?;
    let verdict = if r.per_second >= BENCH_TARGET {
        "meets target"
    } else if r.per_second >= BENCH_FLOOR {
        "below target"
    } else {
        "below floor"
    };
    writeln!(out, "status: {verdict}")?;
    Ok(if r.per_second >= BENCH_FLOOR { EXIT_OK } else { EXIT_INTERNAL })
}

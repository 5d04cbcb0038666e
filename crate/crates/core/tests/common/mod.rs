//! Independent oracles and random instance generators shared by the
//! integration tests and the acceptance harness.

#![allow(dead_code)]

use std::f64::consts::PI;

use obbox::geometry::{AxisBox, OrientedBox, Point};
use obbox::metrics::{Detection, GroundTruthObject};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_box(rng: &mut ChaCha8Rng, center_range: f64, size: (f64, f64)) -> OrientedBox {
    let c = Point::new(rng.random_range(0.0..center_range), rng.random_range(0.0..center_range));
    OrientedBox::from_center(
        c,
        rng.random_range(size.0..size.1),
        rng.random_range(size.0..size.1),
        rng.random_range(0.0..PI),
    )
    .unwrap()
}

/// A pair that overlaps more often than not.
pub fn random_pair(rng: &mut ChaCha8Rng) -> (OrientedBox, OrientedBox) {
    let a = random_box(rng, 10.0, (0.5, 6.0));
    let shift = Point::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
    let b = OrientedBox::from_center(
        a.center() + shift,
        rng.random_range(0.5..6.0),
        rng.random_range(0.5..6.0),
        rng.random_range(0.0..PI),
    )
    .unwrap();
    (a, b)
}

/// Four points on a random ellipse in angular order; always strictly convex.
pub fn random_convex_quad(rng: &mut ChaCha8Rng) -> Vec<Point> {
    let (rx, ry) = (rng.random_range(1.0..20.0), rng.random_range(1.0..20.0));
    let tilt = rng.random_range(0.0..PI);
    let center = Point::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
    let mut angles: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    angles.sort_by(f64::total_cmp);
    angles.iter().map(|&t| center + Point::new(rx * t.cos(), ry * t.sin()).rotate(tilt)).collect()
}

fn inside(r: &OrientedBox, p: Point) -> bool {
    let v = r.vertices();
    let (u, w) = (v[1] - v[0], v[3] - v[0]);
    let d = p - v[0];
    let (a, b) = (d.dot(u), d.dot(w));
    (0.0..=u.dot(u)).contains(&a) && (0.0..=w.dot(w)).contains(&b)
}

/// IOU estimated from one jittered sample per cell of a `side × side` grid
/// over the joint bounding box.
pub fn monte_carlo_iou(a: &OrientedBox, b: &OrientedBox, side: usize, rng: &mut ChaCha8Rng) -> f64 {
    let pts = a.vertices().iter().chain(b.vertices());
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in pts {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let (dx, dy) = ((x1 - x0) / side as f64, (y1 - y0) / side as f64);
    let (mut in_a, mut in_b, mut both) = (0u64, 0u64, 0u64);
    for i in 0..side {
        for j in 0..side {
            let p = Point::new(x0 + (i as f64 + rng.random::<f64>()) * dx, y0 + (j as f64 + rng.random::<f64>()) * dy);
            let (ia, ib) = (inside(a, p), inside(b, p));
            in_a += ia as u64;
            in_b += ib as u64;
            both += (ia && ib) as u64;
        }
    }
    let union = in_a + in_b - both;
    if union == 0 {
        0.0
    } else {
        both as f64 / union as f64
    }
}

fn bounding_area_at(points: &[Point], deg: f64) -> f64 {
    let (s, c) = deg.to_radians().sin_cos();
    let (mut u0, mut u1, mut v0, mut v1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in points {
        let u = p.x * c + p.y * s;
        let v = -p.x * s + p.y * c;
        u0 = u0.min(u);
        u1 = u1.max(u);
        v0 = v0.min(v);
        v1 = v1.max(v);
    }
    (u1 - u0) * (v1 - v0)
}

/// Smallest axis-aligned bounding area over rotations in steps of
/// `step_deg` across a quarter turn.
pub fn sweep_min_area(points: &[Point], step_deg: f64) -> f64 {
    let steps = (90.0 / step_deg).round() as usize;
    (0..steps).map(|k| bounding_area_at(points, k as f64 * step_deg)).fold(f64::INFINITY, f64::min)
}

/// Sweep at 0.1°, then resweep every coarse local minimum at 1e-5° over
/// the neighbouring interval. Pins the optimum far tighter than a uniform
/// fine sweep at the same cost.
pub fn refined_min_area(points: &[Point]) -> f64 {
    const COARSE: f64 = 0.1;
    const FINE: f64 = 1e-5;
    let steps = (90.0 / COARSE).round() as usize;
    let coarse: Vec<f64> = (0..steps).map(|k| bounding_area_at(points, k as f64 * COARSE)).collect();
    let mut best = f64::INFINITY;
    for k in 0..steps {
        let (prev, next) = (coarse[(k + steps - 1) % steps], coarse[(k + 1) % steps]);
        if coarse[k] > prev || coarse[k] > next {
            continue;
        }
        let centre = k as f64 * COARSE;
        let n = (COARSE / FINE).round() as i64;
        for j in -n..=n {
            best = best.min(bounding_area_at(points, centre + j as f64 * FINE));
        }
    }
    best
}

/// Greedy bipartite-then-threshold matching by sorting every pair.
pub fn matching_oracle(gts: &[AxisBox], defaults: &[AxisBox], threshold: f64) -> Vec<Option<usize>> {
    let mut all: Vec<(f64, usize, usize)> = Vec::new();
    for (j, g) in gts.iter().enumerate() {
        for (i, d) in defaults.iter().enumerate() {
            all.push((obbox::geometry::iou_axis(g, d), j, i));
        }
    }
    all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut owner = vec![None; defaults.len()];
    let mut gt_done = vec![false; gts.len()];
    for &(_, j, i) in &all {
        if !gt_done[j] && owner[i].is_none() {
            gt_done[j] = true;
            owner[i] = Some(j);
        }
    }
    for i in 0..defaults.len() {
        if owner[i].is_some() {
            continue;
        }
        let best = all.iter().filter(|t| t.2 == i).min_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        if let Some(best) = best.filter(|b| b.0 >= threshold) {
            owner[i] = Some(best.1);
        }
    }
    owner
}

/// Sort-based hard negative selection.
pub fn hard_negative_oracle(losses: &[(usize, f64)], positives: usize, ratio: f64) -> Vec<usize> {
    let mut sorted = losses.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let keep = ((ratio * positives as f64).floor() as usize).min(sorted.len());
    let mut out: Vec<usize> = sorted[..keep].iter().map(|p| p.0).collect();
    out.sort_unstable();
    out
}

fn ranked(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    order
}

/// Enumerates every subset and returns the unique one that is consistent
/// with greedy suppression: a detection is kept exactly when no kept
/// detection ranked above it overlaps it beyond the threshold.
pub fn nms_oracle(dets: &[Detection], threshold: f64) -> Vec<usize> {
    assert!(dets.len() <= 16, "exhaustive oracle");
    let order = ranked(dets);
    let rank: Vec<usize> = {
        let mut r = vec![0; dets.len()];
        for (pos, &i) in order.iter().enumerate() {
            r[i] = pos;
        }
        r
    };
    let conflicts = |i: usize, j: usize| {
        dets[i].class_id == dets[j].class_id
            && dets[i].image_id == dets[j].image_id
            && obbox::geometry::iou_axis(&dets[i].bbox, &dets[j].bbox) > threshold
    };
    let mut found = Vec::new();
    for mask in 0u32..(1 << dets.len()) {
        let kept = |i: usize| mask & (1 << i) != 0;
        let consistent = (0..dets.len()).all(|i| {
            let blocked = (0..dets.len()).any(|j| kept(j) && rank[j] < rank[i] && conflicts(i, j));
            kept(i) == !blocked
        });
        if consistent {
            found.push((0..dets.len()).filter(|&i| kept(i)).collect::<Vec<_>>());
        }
    }
    assert_eq!(found.len(), 1, "greedy suppression has a unique fixed point");
    found.pop().unwrap()
}

/// Per-class values recomputed from scratch at every rank cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub class_id: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub recall: f64,
    pub precision: f64,
    pub ap: f64,
    pub miou: f64,
}

fn true_positives(dets: &[&Detection], gts: &[&GroundTruthObject], threshold: f64) -> Vec<Option<(usize, f64)>> {
    let mut taken = vec![false; gts.len()];
    dets.iter()
        .map(|d| {
            let best = (0..gts.len())
                .filter(|&k| !taken[k] && gts[k].image_id == d.image_id)
                .map(|k| (k, obbox::geometry::iou_axis(&d.bbox, &gts[k].bbox)))
                .fold(
                    None,
                    |best: Option<(usize, f64)>, c| if best.is_none_or(|b| c.1 > b.1) { Some(c) } else { best },
                );
            match best {
                Some((k, iou)) if iou >= threshold => {
                    taken[k] = true;
                    Some((k, iou))
                }
                _ => None,
            }
        })
        .collect()
}

pub fn pr_oracle(dets: &[Detection], gts: &[GroundTruthObject], threshold: f64) -> Vec<OracleRow> {
    let mut classes: Vec<usize> = dets.iter().map(|d| d.class_id).chain(gts.iter().map(|g| g.class_id)).collect();
    classes.sort_unstable();
    classes.dedup();
    let order = ranked(dets);
    classes
        .into_iter()
        .map(|c| {
            let class_dets: Vec<&Detection> = order.iter().map(|&i| &dets[i]).filter(|d| d.class_id == c).collect();
            let class_gts: Vec<&GroundTruthObject> = gts.iter().filter(|g| g.class_id == c).collect();
            let n_gt = class_gts.len();
            let mut recall = Vec::new();
            let mut precision = Vec::new();
            for k in 1..=class_dets.len() {
                let tp = true_positives(&class_dets[..k], &class_gts, threshold).iter().flatten().count();
                recall.push(if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 });
                precision.push(tp as f64 / k as f64);
            }
            let mut ap = 0.0;
            let mut prev = 0.0;
            for k in 0..recall.len() {
                if recall[k] > prev {
                    let best = precision[k..].iter().copied().fold(0.0, f64::max);
                    ap += (recall[k] - prev) * best;
                    prev = recall[k];
                }
            }
            let hits = true_positives(&class_dets, &class_gts, threshold);
            let ious: Vec<f64> = hits
                .iter()
                .zip(&class_dets)
                .filter_map(|(h, d)| h.map(|(k, _)| obbox::geometry::iou_axis(&d.bbox, &class_gts[k].bbox)))
                .collect();
            let tp = ious.len();
            let fp = class_dets.len() - tp;
            let fn_ = n_gt - tp;
            OracleRow {
                class_id: c,
                tp,
                fp,
                fn_,
                recall: if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 },
                precision: if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 },
                ap: if n_gt == 0 { 0.0 } else { ap },
                miou: if ious.is_empty() { 0.0 } else { ious.iter().sum::<f64>() / ious.len() as f64 },
            }
        })
        .collect()
}

/// Central difference of `f` at `x` along coordinate `i`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, step: f64) -> f64 {
    let mut hi = x.to_vec();
    let mut lo = x.to_vec();
    hi[i] += step;
    lo[i] -= step;
    (f(&hi) - f(&lo)) / (2.0 * step)
}

/// Relative agreement with a small absolute floor for near-zero entries.
pub fn grad_close(analytic: f64, numeric: f64, rel: f64) -> bool {
    (analytic - numeric).abs() <= rel * analytic.abs().max(numeric.abs()).max(1e-3)
}

fn rect_quad(x0: f64, y0: f64, w: f64, h: f64) -> obbox::geometry::ConvexPolygon {
    obbox::geometry::ConvexPolygon::new(vec![
        Point::new(x0, y0),
        Point::new(x0 + w, y0),
        Point::new(x0 + w, y0 + h),
        Point::new(x0, y0 + h),
    ])
    .unwrap()
}

/// One image with up to three ground-truth rectangles over two classes and
/// six detections scattered around them. Coordinates are small integers and
/// scores come from a short list, so IOU and score ties both occur.
pub fn six_box_instance(rng: &mut ChaCha8Rng) -> (Vec<GroundTruthObject>, Vec<Detection>) {
    let gts: Vec<GroundTruthObject> = (0..rng.random_range(1..=3))
        .map(|_| {
            let (x, y) = (rng.random_range(0..12) as f64, rng.random_range(0..12) as f64);
            let (w, h) = (rng.random_range(2..6) as f64, rng.random_range(2..6) as f64);
            GroundTruthObject::from_quad("img", rng.random_range(1..=2), rect_quad(x, y, w, h)).unwrap()
        })
        .collect();
    const SCORES: [f64; 6] = [0.3, 0.5, 0.75, 0.75, 0.9, 1.0];
    let dets = (0..6)
        .map(|_| {
            let g = &gts[rng.random_range(0..gts.len())];
            let (x0, y0, _, _) = g.bbox.corners();
            let x = x0 + rng.random_range(-2..=2) as f64;
            let y = y0 + rng.random_range(-2..=2) as f64;
            let w = (g.bbox.w + rng.random_range(-1..=1) as f64).max(1.0);
            let h = (g.bbox.h + rng.random_range(-1..=1) as f64).max(1.0);
            let class_id = if rng.random_bool(0.8) { g.class_id } else { 3 - g.class_id };
            Detection {
                image_id: "img".into(),
                class_id,
                score: SCORES[rng.random_range(0..SCORES.len())],
                bbox: AxisBox::new(x + w / 2.0, y + h / 2.0, w, h).unwrap(),
                rbox: None,
            }
        })
        .collect();
    (gts, dets)
}

//! Default-box generation and data-driven default-box shape selection.
//!
//! Shapes are clustered with K-means under the distance `1 - IOU`, where both
//! boxes are placed on a common center so that only width and height matter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::AxisBox;

pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_MAX_ITERATIONS: usize = 300;

/// Width and height normalized to the image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxShape {
    pub w: f64,
    pub h: f64,
}

impl BoxShape {
    pub fn new(w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && w <= 1.0 && h > 0.0 && h <= 1.0) {
            return Err(Error::invalid(format!("box shape must lie in (0,1]², got ({w}, {h})")));
        }
        Ok(BoxShape { w, h })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// IOU of two shapes sharing a center.
pub fn shape_iou(a: &BoxShape, b: &BoxShape) -> f64 {
    let overlap = a.w.min(b.w) * a.h.min(b.h);
    overlap / (a.area() + b.area() - overlap)
}

pub fn cluster_distance(b: &BoxShape, c: &BoxShape) -> f64 {
    1.0 - shape_iou(b, c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Vec<BoxShape>,
    pub assignments: Vec<usize>,
    pub miou: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    pub max_iterations: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig { k, seed, restarts: DEFAULT_RESTARTS, max_iterations: DEFAULT_MAX_ITERATIONS }
    }
}

fn nearest(b: &BoxShape, centroids: &[BoxShape]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = cluster_distance(b, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

fn assign_all(boxes: &[BoxShape], centroids: &[BoxShape]) -> Vec<usize> {
    boxes.iter().map(|b| nearest(b, centroids)).collect()
}

fn distinct_count(boxes: &[BoxShape]) -> usize {
    let mut keys: Vec<(u64, u64)> = boxes.iter().map(|b| (b.w.to_bits(), b.h.to_bits())).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

/// Greedy farthest-point seeding from a random first centroid.
fn seed_centroids(boxes: &[BoxShape], k: usize, rng: &mut ChaCha8Rng) -> Vec<BoxShape> {
    let first = rng.random_range(0..boxes.len());
    let mut centroids = vec![boxes[first]];
    let mut gap: Vec<f64> = boxes.iter().map(|b| cluster_distance(b, &boxes[first])).collect();
    while centroids.len() < k {
        let (far, _) =
            gap.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
        let c = boxes[far];
        centroids.push(c);
        for (g, b) in gap.iter_mut().zip(boxes) {
            *g = g.min(cluster_distance(b, &c));
        }
    }
    centroids
}

fn update_centroids(boxes: &[BoxShape], assignments: &[usize], centroids: &mut [BoxShape]) {
    let k = centroids.len();
    let mut sums = vec![(0.0f64, 0.0f64, 0usize); k];
    for (b, &a) in boxes.iter().zip(assignments) {
        sums[a].0 += b.w;
        sums[a].1 += b.h;
        sums[a].2 += 1;
    }
    let mut taken = vec![false; boxes.len()];
    for (j, &(sw, sh, n)) in sums.iter().enumerate() {
        if n > 0 {
            centroids[j] = BoxShape { w: sw / n as f64, h: sh / n as f64 };
        }
    }
    // Empty clusters move onto the worst-served box.
    for j in 0..k {
        if sums[j].2 > 0 {
            continue;
        }
        let mut worst = None;
        let mut worst_d = f64::NEG_INFINITY;
        for (i, (b, &a)) in boxes.iter().zip(assignments).enumerate() {
            if taken[i] {
                continue;
            }
            let d = cluster_distance(b, &centroids[a]);
            if d > worst_d {
                worst_d = d;
                worst = Some(i);
            }
        }
        if let Some(i) = worst {
            taken[i] = true;
            centroids[j] = boxes[i];
        }
    }
}

fn mean_iou(boxes: &[BoxShape], centroids: &[BoxShape], assignments: &[usize]) -> f64 {
    let total: f64 = boxes.iter().zip(assignments).map(|(b, &a)| shape_iou(b, &centroids[a])).sum();
    total / boxes.len() as f64
}

fn run_once(boxes: &[BoxShape], k: usize, max_iterations: usize, seed: u64) -> ClusterModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(boxes, k, &mut rng);
    let mut assignments = assign_all(boxes, &centroids);
    for _ in 0..max_iterations {
        update_centroids(boxes, &assignments, &mut centroids);
        let next = assign_all(boxes, &centroids);
        if next == assignments {
            break;
        }
        assignments = next;
    }
    let miou = mean_iou(boxes, &centroids, &assignments);
    ClusterModel { centroids, assignments, miou }
}

pub fn kmeans_shapes(boxes: &[BoxShape], k: usize, seed: u64) -> Result<ClusterModel> {
    kmeans_shapes_with(boxes, &KMeansConfig::new(k, seed))
}

/// Best-of-`restarts` K-means. Restarts run in parallel; the winner is the
/// highest mIOU, ties going to the earliest restart, so the result depends
/// only on the configuration.
pub fn kmeans_shapes_with(boxes: &[BoxShape], cfg: &KMeansConfig) -> Result<ClusterModel> {
    if boxes.is_empty() {
        return Err(Error::invalid("no boxes to cluster"));
    }
    if cfg.k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    let distinct = distinct_count(boxes);
    if cfg.k > distinct {
        return Err(Error::invalid(format!("k = {} exceeds the {distinct} distinct box shapes", cfg.k)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeds: Vec<u64> = (0..cfg.restarts.max(1)).map(|_| rng.random()).collect();
    let runs: Vec<ClusterModel> = seeds.par_iter().map(|&s| run_once(boxes, cfg.k, cfg.max_iterations, s)).collect();
    let best = runs.into_iter().reduce(|best, m| if m.miou > best.miou { m } else { best }).unwrap();
    Ok(best)
}

/// Mean over `boxes` of the best IOU against any candidate.
pub fn mean_best_iou(boxes: &[BoxShape], candidates: &[BoxShape]) -> f64 {
    if boxes.is_empty() || candidates.is_empty() {
        return 0.0;
    }
    let total: f64 = boxes.iter().map(|b| candidates.iter().map(|c| shape_iou(b, c)).fold(0.0, f64::max)).sum();
    total / boxes.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub approach: String,
    pub boxes: usize,
    pub miou: f64,
}

pub fn miou_report(boxes: &[BoxShape], candidate_sets: &[(String, Vec<BoxShape>)]) -> Result<Vec<ReportRow>> {
    if boxes.is_empty() {
        return Err(Error::invalid("no boxes to evaluate"));
    }
    Ok(candidate_sets
        .iter()
        .map(|(name, set)| ReportRow { approach: name.clone(), boxes: set.len(), miou: mean_best_iou(boxes, set) })
        .collect())
}

/// Aligned text table with the mIOU in percent.
pub fn format_report(rows: &[ReportRow]) -> String {
    let width = rows.iter().map(|r| r.approach.len()).chain(["Approach".len()]).max().unwrap();
    let mut out = format!("{:<width$}  {:>13}  {:>8}\n", "Approach", "# def. boxes", "mIOU (%)");
    for r in rows {
        out.push_str(&format!("{:<width$}  {:>13}  {:>8.2}\n", r.approach, r.boxes, 100.0 * r.miou));
    }
    out
}

pub const SSD_ASPECT_RATIOS: [f64; 5] = [1.0, 2.0, 3.0, 0.5, 1.0 / 3.0];
pub const SSD_BASELINE_SCALES: [f64; 2] = [0.1, 0.2];

/// SSD-style hand-picked shapes: every aspect ratio at every scale, with
/// `w = s·√r` and `h = s/√r`, capped at 1.
pub fn hand_picked_shapes(scales: &[f64], ratios: &[f64]) -> Result<Vec<BoxShape>> {
    let mut out = Vec::with_capacity(scales.len() * ratios.len());
    for &s in scales {
        for &r in ratios {
            if r.is_nan() || r <= 0.0 {
                return Err(Error::invalid(format!("aspect ratio must be positive, got {r}")));
            }
            out.push(BoxShape::new((s * r.sqrt()).min(1.0), (s / r.sqrt()).min(1.0))?);
        }
    }
    Ok(out)
}

/// Shapes plus feature-map grids; one default box per shape per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefaultBoxSet {
    shapes: Vec<BoxShape>,
    grid_sizes: Vec<(usize, usize)>,
}

impl DefaultBoxSet {
    pub fn new(shapes: Vec<BoxShape>, grid_sizes: Vec<(usize, usize)>) -> Result<Self> {
        if shapes.is_empty() {
            return Err(Error::invalid("default box set needs at least one shape"));
        }
        if grid_sizes.is_empty() || grid_sizes.iter().any(|&(r, c)| r == 0 || c == 0) {
            return Err(Error::invalid(format!("grid sizes must be positive, got {grid_sizes:?}")));
        }
        Ok(DefaultBoxSet { shapes, grid_sizes })
    }

    pub fn shapes(&self) -> &[BoxShape] {
        &self.shapes
    }

    pub fn grid_sizes(&self) -> &[(usize, usize)] {
        &self.grid_sizes
    }

    pub fn len(&self) -> usize {
        self.grid_sizes.iter().map(|(r, c)| r * c).sum::<usize>() * self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Boxes in grid order, then row-major cell order, then shape order.
pub fn generate_default_boxes(set: &DefaultBoxSet, image_size: (f64, f64)) -> Vec<AxisBox> {
    let (iw, ih) = image_size;
    let mut out = Vec::with_capacity(set.len());
    for &(rows, cols) in &set.grid_sizes {
        for r in 0..rows {
            let cy = (r as f64 + 0.5) / rows as f64 * ih;
            for c in 0..cols {
                let cx = (c as f64 + 0.5) / cols as f64 * iw;
                for s in &set.shapes {
                    out.push(AxisBox { cx, cy, w: s.w * iw, h: s.h * ih });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(w: f64, h: f64) -> BoxShape {
        BoxShape::new(w, h).unwrap()
    }

    fn two_clusters() -> Vec<BoxShape> {
        let mut v = vec![shape(0.1, 0.1); 10];
        v.extend(vec![shape(0.4, 0.1); 10]);
        v
    }

    #[test]
    fn distance_examples() {
        assert_eq!(cluster_distance(&shape(0.2, 0.3), &shape(0.2, 0.3)), 0.0);
        assert!((cluster_distance(&shape(0.2, 0.2), &shape(0.4, 0.4)) - 0.75).abs() < 1e-15);
        assert!((cluster_distance(&shape(0.1, 0.2), &shape(0.2, 0.1)) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn two_pure_clusters() {
        let m = kmeans_shapes(&two_clusters(), 2, 7).unwrap();
        let mut c = m.centroids.clone();
        c.sort_by(|a, b| a.w.total_cmp(&b.w));
        assert!((c[0].w - 0.1).abs() < 1e-12 && (c[0].h - 0.1).abs() < 1e-12);
        assert!((c[1].w - 0.4).abs() < 1e-12 && (c[1].h - 0.1).abs() < 1e-12);
        assert!((m.miou - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_cluster_takes_the_mean() {
        // IOU 0.01/0.025 = 0.4 for the small boxes, 0.025/0.04 = 0.625 for the wide ones.
        let m = kmeans_shapes(&two_clusters(), 1, 3).unwrap();
        assert!((m.centroids[0].w - 0.25).abs() < 1e-12);
        assert!((m.centroids[0].h - 0.1).abs() < 1e-12);
        assert!((m.miou - 0.5125).abs() < 1e-12);
        let report = miou_report(&two_clusters(), &[("mean".into(), vec![shape(0.25, 0.1)])]).unwrap();
        assert!((report[0].miou - 0.5125).abs() < 1e-12);
    }

    #[test]
    fn k_equal_to_distinct_is_perfect() {
        let boxes: Vec<BoxShape> =
            [(0.1, 0.2), (0.3, 0.3), (0.05, 0.5), (0.6, 0.1), (0.1, 0.2)].iter().map(|&(w, h)| shape(w, h)).collect();
        let m = kmeans_shapes(&boxes, 4, 11).unwrap();
        assert!((m.miou - 1.0).abs() < 1e-12);
        assert!(kmeans_shapes(&boxes, 5, 11).is_err());
    }

    #[test]
    fn assignments_are_nearest() {
        let boxes: Vec<BoxShape> =
            (0..50).map(|i| shape(0.02 + 0.017 * (i % 13) as f64, 0.03 + 0.011 * (i % 7) as f64)).collect();
        let m = kmeans_shapes(&boxes, 4, 1).unwrap();
        for (b, &a) in boxes.iter().zip(&m.assignments) {
            let d = cluster_distance(b, &m.centroids[a]);
            for c in &m.centroids {
                assert!(d <= cluster_distance(b, c));
            }
        }
        let via_report = mean_best_iou(&boxes, &m.centroids);
        assert!((via_report - m.miou).abs() < 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        let boxes: Vec<BoxShape> = (0..40).map(|i| shape(0.01 + 0.02 * i as f64, 0.5 - 0.01 * i as f64)).collect();
        assert_eq!(kmeans_shapes(&boxes, 3, 99).unwrap(), kmeans_shapes(&boxes, 3, 99).unwrap());
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(kmeans_shapes(&[], 1, 0).is_err());
        assert!(kmeans_shapes(&two_clusters(), 0, 0).is_err());
        assert!(kmeans_shapes(&two_clusters(), 3, 0).is_err());
    }

    #[test]
    fn candidate_set_equal_to_data_is_perfect() {
        let boxes = vec![shape(0.1, 0.3), shape(0.2, 0.2)];
        let rows = miou_report(&boxes, &[("self".into(), boxes.clone())]).unwrap();
        assert_eq!(rows[0].miou, 1.0);
        assert_eq!(rows[0].boxes, 2);
    }

    #[test]
    fn grid_placement() {
        let set = DefaultBoxSet::new(vec![shape(0.5, 0.5)], vec![(2, 2)]).unwrap();
        let boxes = generate_default_boxes(&set, (1.0, 1.0));
        let centers: Vec<(f64, f64)> = boxes.iter().map(|b| (b.cx, b.cy)).collect();
        assert_eq!(centers, vec![(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)]);

        let six: Vec<BoxShape> = (1..=6).map(|i| shape(0.1 * i as f64, 0.1)).collect();
        let set = DefaultBoxSet::new(six, vec![(8, 8)]).unwrap();
        assert_eq!(generate_default_boxes(&set, (512.0, 512.0)).len(), 384);
        assert_eq!(set.len(), 384);

        assert!(DefaultBoxSet::new(vec![], vec![(2, 2)]).is_err());
        assert!(DefaultBoxSet::new(vec![shape(0.1, 0.1)], vec![(0, 2)]).is_err());
    }

    #[test]
    fn hand_picked_has_ten_boxes() {
        let set = hand_picked_shapes(&SSD_BASELINE_SCALES, &SSD_ASPECT_RATIOS).unwrap();
        assert_eq!(set.len(), 10);
        assert!((set[1].w / set[1].h - 2.0).abs() < 1e-12);
    }
}

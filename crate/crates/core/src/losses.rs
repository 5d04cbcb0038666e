//! Loss kernels and their analytic gradients.
//!
//! Batch sums are accumulated left to right so results are bitwise
//! reproducible.

use crate::encoding::{BoxDelta, MatchResult};
use crate::error::{Error, Result};
use crate::geometry::RBoxCode;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Weight of the localization term against the classification term.
    pub alpha: f64,
    /// Negatives kept per positive during hard-negative selection.
    pub negative_ratio: f64,
}

impl LossConfig {
    pub fn new(alpha: f64, negative_ratio: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
        }
        if !negative_ratio.is_finite() || negative_ratio <= 0.0 {
            return Err(Error::invalid(format!("negative ratio must be positive, got {negative_ratio}")));
        }
        Ok(LossConfig { alpha, negative_ratio })
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { alpha: 1.0, negative_ratio: 3.0 }
    }
}

pub fn smooth_l1(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

/// `-1` for `x <= -1`, `x` up to 1, `1` beyond.
pub fn smooth_l1_grad(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

pub fn smooth_ln(x: f64) -> f64 {
    let a = x.abs();
    (a + 1.0) * a.ln_1p() - a
}

pub fn smooth_ln_grad(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MseReduction {
    /// Plain squared norm of the difference.
    #[default]
    Sum,
    /// Squared norm divided by the vector length.
    Mean,
}

pub fn mse(y: &[f64], y_star: &[f64]) -> Result<f64> {
    mse_with(y, y_star, MseReduction::Sum)
}

pub fn mse_with(y: &[f64], y_star: &[f64], reduction: MseReduction) -> Result<f64> {
    Error::check_len(y.len(), y_star.len())?;
    let sum: f64 = y.iter().zip(y_star).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(match reduction {
        MseReduction::Sum => sum,
        MseReduction::Mean if y.is_empty() => 0.0,
        MseReduction::Mean => sum / y.len() as f64,
    })
}

/// Gradient of the summed [`mse`] with respect to `y`.
pub fn mse_grad(y: &[f64], y_star: &[f64]) -> Result<Vec<f64>> {
    Error::check_len(y.len(), y_star.len())?;
    Ok(y.iter().zip(y_star).map(|(a, b)| 2.0 * (a - b)).collect())
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_softmax(logits: &[f64], class: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    logits[class] - max - total.ln()
}

/// `(box index, target class)` for every term of the classification loss:
/// positives first in default-box order, then the selected negatives with
/// class 0.
fn classification_terms(
    confidences: &[Vec<f64>],
    matches: &MatchResult,
    labels: &[usize],
    selected_negatives: &[usize],
) -> Result<Vec<(usize, usize)>> {
    Error::check_len(confidences.len(), matches.num_defaults())?;
    let mut terms = Vec::with_capacity(matches.positives.len() + selected_negatives.len());
    for pair in &matches.pairs {
        let classes = confidences[pair.default].len();
        let label =
            *labels.get(pair.gt).ok_or_else(|| Error::invalid(format!("no label for ground truth {}", pair.gt)))?;
        if label == 0 || label >= classes {
            return Err(Error::invalid(format!("label {label} of ground truth {} is outside 1..{classes}", pair.gt)));
        }
        terms.push((pair.default, label));
    }
    for &i in selected_negatives {
        if i >= confidences.len() {
            return Err(Error::invalid(format!("negative index {i} out of range")));
        }
        if matches.gt_for_default(i).is_some() {
            return Err(Error::invalid(format!("default box {i} is a positive, not a negative")));
        }
        terms.push((i, 0));
    }
    for &(i, _) in &terms {
        if confidences[i].is_empty() {
            return Err(Error::invalid(format!("empty confidence vector for box {i}")));
        }
    }
    Ok(terms)
}

/// Softmax cross-entropy over matched positives (their ground-truth class)
/// and the selected negatives (background, class 0).
pub fn classification_loss(
    confidences: &[Vec<f64>],
    matches: &MatchResult,
    labels: &[usize],
    selected_negatives: &[usize],
) -> Result<f64> {
    let terms = classification_terms(confidences, matches, labels, selected_negatives)?;
    Ok(terms.iter().map(|&(i, c)| -log_softmax(&confidences[i], c)).sum())
}

/// Gradient of [`classification_loss`] with respect to every logit. Boxes
/// outside the loss get zero rows.
pub fn classification_loss_grad(
    confidences: &[Vec<f64>],
    matches: &MatchResult,
    labels: &[usize],
    selected_negatives: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let terms = classification_terms(confidences, matches, labels, selected_negatives)?;
    let mut grad: Vec<Vec<f64>> = confidences.iter().map(|c| vec![0.0; c.len()]).collect();
    for (i, c) in terms {
        let p = softmax(&confidences[i]);
        for (k, pk) in p.into_iter().enumerate() {
            grad[i][k] += pk - if k == c { 1.0 } else { 0.0 };
        }
    }
    Ok(grad)
}

/// Smooth-L1 summed over positives and the four delta components.
pub fn regression_loss(pred: &[BoxDelta], gt: &[BoxDelta]) -> Result<f64> {
    Error::check_len(pred.len(), gt.len())?;
    Ok(pred
        .iter()
        .zip(gt)
        .flat_map(|(p, g)| p.to_array().into_iter().zip(g.to_array()))
        .map(|(a, b)| smooth_l1(a - b))
        .sum())
}

/// Gradient of [`regression_loss`] with respect to `pred`.
pub fn regression_loss_grad(pred: &[BoxDelta], gt: &[BoxDelta]) -> Result<Vec<BoxDelta>> {
    Error::check_len(pred.len(), gt.len())?;
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            let (p, g) = (p.to_array(), g.to_array());
            BoxDelta::from_array(std::array::from_fn(|m| smooth_l1_grad(p[m] - g[m])))
        })
        .collect())
}

/// `(cls + alpha·reg) / N`, or 0 when nothing was matched.
pub fn ssd_total_loss(cls: f64, reg: f64, n_matched: usize, cfg: &LossConfig) -> f64 {
    if n_matched == 0 {
        return 0.0;
    }
    (cls + cfg.alpha * reg) / n_matched as f64
}

fn check_variants(pred: &[RBoxCode], gt: &[RBoxCode]) -> Result<()> {
    Error::check_len(pred.len(), gt.len())?;
    let three = pred.first().map(RBoxCode::is_three_term);
    for (i, (p, g)) in pred.iter().zip(gt).enumerate() {
        if Some(p.is_three_term()) != three || g.is_three_term() != p.is_three_term() {
            return Err(Error::invalid(format!("regression variant mismatch at pair {i}")));
        }
    }
    Ok(())
}

/// Euclidean loss `1/(2N) Σ (Δd1² + Δd2² + Δh²)`; two-term codes contribute
/// no height term.
pub fn rbox_loss(pred: &[RBoxCode], gt: &[RBoxCode]) -> Result<f64> {
    check_variants(pred, gt)?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            let dh = match (p.h, g.h) {
                (Some(a), Some(b)) => a - b,
                _ => 0.0,
            };
            (p.d1 - g.d1).powi(2) + (p.d2 - g.d2).powi(2) + dh * dh
        })
        .sum();
    Ok(sum / (2.0 * pred.len() as f64))
}

/// Gradient of [`rbox_loss`] with respect to `pred`, as `[d1, d2]` or
/// `[d1, d2, h]` per pair.
pub fn rbox_loss_grad(pred: &[RBoxCode], gt: &[RBoxCode]) -> Result<Vec<Vec<f64>>> {
    check_variants(pred, gt)?;
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            let mut v = vec![(p.d1 - g.d1) / n, (p.d2 - g.d2) / n];
            if let (Some(a), Some(b)) = (p.h, g.h) {
                v.push((a - b) / n);
            }
            v
        })
        .collect())
}

//! Training-side math as pure functions: picking the candidate that best covers
//! each ground-truth box, pairing selections across two frames by identity,
//! Gaussian target heatmaps, and the logistic-MSE loss with its gradient.

use std::collections::{HashMap, HashSet};

use crate::appearance::{Embedding, Heatmap};
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};

/// Default IoU a candidate must exceed to represent a ground-truth object.
pub const DEFAULT_SELECTION_ALPHA: f64 = 0.8;

/// Floor on the target spread, in grid cells.
pub const MIN_SIGMA: f64 = 0.5;

/// Minimum overlap used by the size-adaptive radius.
pub const RADIUS_MIN_OVERLAP: f64 = 0.7;

/// Centre and spread of one Gaussian target, in grid cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSpec {
    pub cx: f64,
    pub cy: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SelectionResult {
    pub selected_features: Vec<Embedding>,
    pub selected_ids: Vec<u64>,
    pub selected_indices: Vec<usize>,
    /// IoU between each selected candidate and its ground-truth box.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingPair {
    pub prev_features: Vec<Embedding>,
    pub gt_centers: Vec<GaussianSpec>,
    pub shared_ids: Vec<u64>,
}

impl TrainingPair {
    pub fn len(&self) -> usize {
        self.shared_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shared_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub loss: f64,
    /// dL/dm for every cell of every predicted heatmap.
    pub gradient: Vec<Heatmap>,
}

/// For each ground-truth box, selects the candidate with the highest IoU if
/// that IoU exceeds `alpha`. The lowest candidate index wins ties. Objects
/// without a good enough candidate are left out.
pub fn select_objects(
    candidates: &[(BBox, Embedding)],
    gt_boxes: &[BBox],
    gt_ids: &[u64],
    alpha: f64,
) -> Result<SelectionResult> {
    if gt_boxes.len() != gt_ids.len() {
        return Err(Error::InvalidInput(format!("{} gt boxes but {} gt ids", gt_boxes.len(), gt_ids.len())));
    }
    let mut out = SelectionResult::default();
    for (gt, &id) in gt_boxes.iter().zip(gt_ids) {
        let mut best: Option<(usize, f64)> = None;
        for (i, (bx, _)) in candidates.iter().enumerate() {
            let v = iou(bx, gt);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        if let Some((i, score)) = best {
            if score > alpha {
                out.selected_features.push(candidates[i].1.clone());
                out.selected_ids.push(id);
                out.selected_indices.push(i);
                out.scores.push(score);
            }
        }
    }
    Ok(out)
}

/// Keeps the previous-frame selections whose identity was also selected in the
/// current frame, in previous-frame order, each with its current-frame target.
pub fn pair_by_id(
    prev: &SelectionResult,
    cur: &SelectionResult,
    cur_gt_centers: &HashMap<u64, GaussianSpec>,
) -> Result<TrainingPair> {
    let cur_ids: HashSet<u64> = cur.selected_ids.iter().copied().collect();
    let mut pair = TrainingPair::default();
    for (i, id) in prev.selected_ids.iter().enumerate() {
        if !cur_ids.contains(id) {
            continue;
        }
        let spec = cur_gt_centers
            .get(id)
            .ok_or_else(|| Error::InvalidInput(format!("no target centre for id {id}")))?;
        pair.prev_features.push(prev.selected_features[i].clone());
        pair.gt_centers.push(*spec);
        pair.shared_ids.push(*id);
    }
    Ok(pair)
}

/// `exp(-((x - cx)^2 + (y - cy)^2) / (2 sigma^2))` on an `height x width` grid.
pub fn gaussian_heatmap(spec: &GaussianSpec, height: usize, width: usize) -> Result<Heatmap> {
    if !(spec.sigma > 0.0) || !spec.sigma.is_finite() {
        return Err(Error::InvalidInput(format!("sigma {} must be positive", spec.sigma)));
    }
    let in_x = spec.cx >= 0.0 && spec.cx <= (width as f64 - 1.0);
    let in_y = spec.cy >= 0.0 && spec.cy <= (height as f64 - 1.0);
    if !in_x || !in_y {
        return Err(Error::InvalidInput(format!(
            "centre ({}, {}) outside {height}x{width} grid",
            spec.cx, spec.cy
        )));
    }
    let denom = 2.0 * spec.sigma * spec.sigma;
    let mut values = Vec::with_capacity(height * width);
    for y in 0..height {
        let dy = y as f64 - spec.cy;
        for x in 0..width {
            let dx = x as f64 - spec.cx;
            values.push((-(dx * dx + dy * dy) / denom).exp());
        }
    }
    Heatmap::new(height, width, values)
}

/// Gaussian radius for a `height x width` object such that a box displaced by
/// the radius still overlaps the original by at least `min_overlap`.
/// Smallest root of the three corner-displacement cases, as in CenterNet.
pub fn gaussian_radius(height: f64, width: f64, min_overlap: f64) -> f64 {
    let (h, w, m) = (height, width, min_overlap);

    let b1 = h + w;
    let c1 = w * h * (1.0 - m) / (1.0 + m);
    let r1 = (b1 + (b1 * b1 - 4.0 * c1).sqrt()) / 2.0;

    let a2 = 4.0;
    let b2 = 2.0 * (h + w);
    let c2 = (1.0 - m) * w * h;
    let r2 = (b2 + (b2 * b2 - 4.0 * a2 * c2).sqrt()) / 2.0;

    let a3 = 4.0 * m;
    let b3 = -2.0 * m * (h + w);
    let c3 = (m - 1.0) * w * h;
    let r3 = (b3 + (b3 * b3 - 4.0 * a3 * c3).sqrt()) / 2.0;

    r1.min(r2).min(r3)
}

/// Target spread for a box on a grid with `stride` pixels per cell:
/// one third of the Gaussian radius, floored at [`MIN_SIGMA`].
pub fn size_adaptive_sigma(bbox: &BBox, stride: f64) -> Result<f64> {
    if !bbox.is_valid() || !(stride > 0.0) {
        return Err(Error::InvalidInput(format!("invalid box {bbox:?} or stride {stride}")));
    }
    let r = gaussian_radius(bbox.h / stride, bbox.w / stride, RADIUS_MIN_OVERLAP);
    Ok((r / 3.0).max(MIN_SIGMA))
}

/// Maps a cosine response in `[-1, 1]` to `[0, 1]`.
#[inline]
pub fn squash(correlation: f64) -> f64 {
    (correlation + 1.0) / 2.0
}

/// Logistic-MSE loss over `n` prediction/target pairs:
///
/// ```text
/// L = -(1/n) * sum_pairs sum_xy { (1 - m) ln m            if h >= 1
///                               { (1 - h) m ln(1 - m)     otherwise
/// ```
///
/// The gradient is taken analytically with respect to every `m`.
pub fn logistic_mse_loss(pred: &[Heatmap], gt: &[Heatmap]) -> Result<LossReport> {
    if pred.is_empty() || pred.len() != gt.len() {
        return Err(Error::InvalidInput(format!(
            "need matching non-empty heatmap lists, got {} and {}",
            pred.len(),
            gt.len()
        )));
    }
    let n = pred.len() as f64;
    let mut total = 0.0;
    let mut gradient = Vec::with_capacity(pred.len());
    for (p, g) in pred.iter().zip(gt) {
        if p.height != g.height || p.width != g.width || p.values.len() != g.values.len() {
            return Err(Error::InvalidInput(format!(
                "shape mismatch {}x{} vs {}x{}",
                p.height, p.width, g.height, g.width
            )));
        }
        let mut grad = Vec::with_capacity(p.values.len());
        let mut sum = 0.0;
        for (&m, &h) in p.values.iter().zip(&g.values) {
            if !(m > 0.0 && m < 1.0) {
                return Err(Error::InvalidInput(format!("prediction {m} outside (0, 1)")));
            }
            if !h.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite target {h}")));
            }
            let (term, dterm) = if h >= 1.0 {
                ((1.0 - m) * m.ln(), -m.ln() + (1.0 - m) / m)
            } else {
                let l = (1.0 - m).ln();
                ((1.0 - h) * m * l, (1.0 - h) * (l - m / (1.0 - m)))
            };
            sum += term;
            grad.push(-dterm / n);
        }
        total += sum;
        gradient.push(Heatmap::new(p.height, p.width, grad)?);
    }
    Ok(LossReport { loss: -total / n, gradient })
}

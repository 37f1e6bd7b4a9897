//! Axis-aligned boxes, IoU, detector score fusion and greedy NMS.

use crate::error::{Error, Result};

/// Axis-aligned box in continuous pixel coordinates: top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    /// Builds a box, rejecting non-finite fields and non-positive sizes.
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = BBox { x, y, w, h };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(Error::InvalidInput(format!("invalid box ({x}, {y}, {w}, {h})")))
        }
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w > 0.0
            && self.h > 0.0
    }

    /// Builds a box from its center, aspect ratio (w/h) and height.
    pub fn from_cxcyah(cx: f64, cy: f64, aspect: f64, h: f64) -> Self {
        let w = aspect * h;
        BBox { x: cx - w / 2.0, y: cy - h / 2.0, w, h }
    }

    /// (center-x, center-y, w/h, h)
    pub fn to_cxcyah(&self) -> [f64; 4] {
        [self.x + self.w / 2.0, self.y + self.h / 2.0, self.w / self.h, self.h]
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    #[inline]
    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    #[inline]
    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    /// Area measured from the corner coordinates, so that `iou(a, a)` is exactly one.
    #[inline]
    pub fn area(&self) -> f64 {
        (self.right() - self.x) * (self.bottom() - self.y)
    }
}

/// Intersection over union. Symmetric, in `[0, 1]`.
#[inline]
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.right().min(b.right()) - a.x.max(b.x)).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Overall detection score: objectness times the best class probability.
pub fn fuse_score(conf: f64, class_probs: &[f64]) -> Result<f64> {
    if class_probs.is_empty() {
        return Err(Error::InvalidInput("empty class probability list".into()));
    }
    check_unit("confidence", conf)?;
    let mut best = f64::NEG_INFINITY;
    for &p in class_probs {
        check_unit("class probability", p)?;
        best = best.max(p);
    }
    Ok(conf * best)
}

fn check_unit(what: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} {v} outside [0, 1]")))
    }
}

/// A detector candidate: geometry, objectness, class probabilities and fused score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredBox {
    pub bbox: BBox,
    pub conf: f64,
    pub class_probs: Vec<f64>,
    pub fused: f64,
}

impl ScoredBox {
    pub fn new(bbox: BBox, conf: f64, class_probs: Vec<f64>) -> Result<Self> {
        if !bbox.is_valid() {
            return Err(Error::InvalidInput(format!("invalid box {bbox:?}")));
        }
        let fused = fuse_score(conf, &class_probs)?;
        Ok(ScoredBox { bbox, conf, class_probs, fused })
    }

    /// Single-class detection, so the fused score equals `conf`.
    pub fn single_class(bbox: BBox, conf: f64) -> Result<Self> {
        Self::new(bbox, conf, vec![1.0])
    }
}

/// Suppression threshold to use with [`nms`] when the detector supplies none.
pub const DEFAULT_NMS_IOU: f64 = 0.7;

/// Greedy hard NMS. Returns kept indices ordered by descending fused score,
/// ties broken by lower input index.
pub fn nms(candidates: &[ScoredBox], iou_threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| candidates[b].fused.total_cmp(&candidates[a].fused).then(a.cmp(&b)));

    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let bi = &candidates[i].bbox;
        if kept.iter().all(|&k| iou(&candidates[k].bbox, bi) <= iou_threshold) {
            kept.push(i);
        }
    }
    kept
}

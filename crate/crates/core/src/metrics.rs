//! CLEAR MOT, identity (IDF1) and HOTA metrics.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use crate::assignment::{linear_assignment, CostMatrix};
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};

/// One row of a ground-truth or result file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRecord {
    pub frame: u32,
    pub id: u64,
    pub bbox: BBox,
    pub conf: f64,
}

/// Localisation thresholds 0.05, 0.10, ..., 0.95.
pub fn hota_alphas() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}

/// Slack when comparing an IoU against a HOTA threshold.
const ALPHA_EPS: f64 = f64::EPSILON;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameBreakdown {
    pub frame: u32,
    pub num_gt: usize,
    pub num_pred: usize,
    pub matches: usize,
    pub fp: usize,
    pub fn_: usize,
    pub id_switches: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClearMetrics {
    pub mota: f64,
    pub fp: usize,
    pub fn_: usize,
    pub id_switches: usize,
    pub matches: usize,
    pub num_gt: usize,
    pub per_frame: Vec<FrameBreakdown>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdentityMetrics {
    pub idf1: f64,
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
}

/// Raw counts at one localisation threshold.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HotaAlpha {
    pub alpha: f64,
    pub tp: usize,
    pub fn_: usize,
    pub fp: usize,
    /// Sum over true positives of their association accuracy.
    pub assoc_sum: f64,
}

impl HotaAlpha {
    pub fn deta(&self) -> f64 {
        ratio(self.tp as f64, (self.tp + self.fn_ + self.fp) as f64)
    }

    pub fn assa(&self) -> f64 {
        if self.tp == 0 {
            // nothing detected: perfect only if there was nothing to detect
            return if self.fn_ + self.fp == 0 { 1.0 } else { 0.0 };
        }
        self.assoc_sum / self.tp as f64
    }

    pub fn hota(&self) -> f64 {
        (self.deta() * self.assa()).sqrt()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HotaMetrics {
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub per_alpha: Vec<HotaAlpha>,
}

impl HotaMetrics {
    fn from_alphas(per_alpha: Vec<HotaAlpha>) -> Self {
        let n = per_alpha.len() as f64;
        let mean = |f: &dyn Fn(&HotaAlpha) -> f64| per_alpha.iter().map(f).sum::<f64>() / n;
        HotaMetrics {
            hota: mean(&HotaAlpha::hota),
            deta: mean(&HotaAlpha::deta),
            assa: mean(&HotaAlpha::assa),
            per_alpha,
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

type Frames<'a> = BTreeMap<u32, Vec<&'a TrackRecord>>;

/// Groups records by frame (ids ascending within a frame), rejecting repeated `(frame, id)`.
fn group<'a>(records: &'a [TrackRecord], what: &str) -> Result<Frames<'a>> {
    let mut frames: Frames<'_> = BTreeMap::new();
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert((r.frame, r.id)) {
            return Err(Error::InvalidInput(format!(
                "duplicate {what} row for frame {} id {}",
                r.frame, r.id
            )));
        }
        frames.entry(r.frame).or_default().push(r);
    }
    for rows in frames.values_mut() {
        rows.sort_by_key(|r| r.id);
    }
    Ok(frames)
}

fn all_frames(gt: &Frames<'_>, pred: &Frames<'_>) -> Vec<u32> {
    let mut f: Vec<u32> = gt.keys().chain(pred.keys()).copied().collect();
    f.sort_unstable();
    f.dedup();
    f
}

/// Maximum-cardinality matching between `gts` and `preds` over pairs with
/// IoU at least `thr`, maximising total IoU among those.
fn match_by_iou(gts: &[&TrackRecord], preds: &[&TrackRecord], thr: f64) -> Vec<(usize, usize, f64)> {
    if gts.is_empty() || preds.is_empty() {
        return Vec::new();
    }
    let mut ious = vec![0.0; gts.len() * preds.len()];
    let mut cost = CostMatrix::filled(gts.len(), preds.len(), f64::INFINITY);
    for (i, g) in gts.iter().enumerate() {
        for (j, p) in preds.iter().enumerate() {
            let v = iou(&g.bbox, &p.bbox);
            ious[i * preds.len() + j] = v;
            if v >= thr {
                cost.set(i, j, 1.0 - v);
            }
        }
    }
    linear_assignment(&cost, f64::INFINITY)
        .matches
        .into_iter()
        .map(|(i, j)| (i, j, ious[i * preds.len() + j]))
        .collect()
}

/// CLEAR MOT counts. Previous correspondences are kept while they stay above
/// the threshold; the rest are matched optimally on IoU. A switch is counted
/// when a ground-truth object's matched prediction differs from its last one.
pub fn clear_metrics(gt: &[TrackRecord], pred: &[TrackRecord], iou_threshold: f64) -> Result<ClearMetrics> {
    let gf = group(gt, "ground-truth")?;
    let pf = group(pred, "prediction")?;
    let empty = Vec::new();

    let mut last_match: HashMap<u64, u64> = HashMap::new();
    let mut out = ClearMetrics { num_gt: gt.len(), ..Default::default() };

    for frame in all_frames(&gf, &pf) {
        let gts = gf.get(&frame).unwrap_or(&empty);
        let preds = pf.get(&frame).unwrap_or(&empty);
        let mut gt_used = vec![false; gts.len()];
        let mut pred_used = vec![false; preds.len()];
        let mut fb = FrameBreakdown { frame, num_gt: gts.len(), num_pred: preds.len(), ..Default::default() };

        for (i, g) in gts.iter().enumerate() {
            let Some(&pid) = last_match.get(&g.id) else { continue };
            let Some(j) = preds.iter().position(|p| p.id == pid) else { continue };
            if !pred_used[j] && iou(&g.bbox, &preds[j].bbox) >= iou_threshold {
                gt_used[i] = true;
                pred_used[j] = true;
                fb.matches += 1;
            }
        }

        let gi: Vec<usize> = (0..gts.len()).filter(|&i| !gt_used[i]).collect();
        let pj: Vec<usize> = (0..preds.len()).filter(|&j| !pred_used[j]).collect();
        let g_rest: Vec<&TrackRecord> = gi.iter().map(|&i| gts[i]).collect();
        let p_rest: Vec<&TrackRecord> = pj.iter().map(|&j| preds[j]).collect();
        for (a, b, _) in match_by_iou(&g_rest, &p_rest, iou_threshold) {
            let (g, p) = (g_rest[a], p_rest[b]);
            gt_used[gi[a]] = true;
            pred_used[pj[b]] = true;
            fb.matches += 1;
            if last_match.get(&g.id).is_some_and(|&prev| prev != p.id) {
                fb.id_switches += 1;
            }
            last_match.insert(g.id, p.id);
        }

        fb.fn_ = gt_used.iter().filter(|u| !**u).count();
        fb.fp = pred_used.iter().filter(|u| !**u).count();
        out.fp += fb.fp;
        out.fn_ += fb.fn_;
        out.id_switches += fb.id_switches;
        out.matches += fb.matches;
        out.per_frame.push(fb);
    }
    out.mota = mota(out.fp, out.fn_, out.id_switches, out.num_gt);
    Ok(out)
}

fn mota(fp: usize, fn_: usize, idsw: usize, num_gt: usize) -> f64 {
    1.0 - (fp + fn_ + idsw) as f64 / num_gt.max(1) as f64
}

/// Identity F1 under the one-to-one identity mapping that maximises the
/// number of identity-consistent matches over the whole sequence.
pub fn identity_metrics(
    gt: &[TrackRecord],
    pred: &[TrackRecord],
    iou_threshold: f64,
) -> Result<IdentityMetrics> {
    let gf = group(gt, "ground-truth")?;
    let pf = group(pred, "prediction")?;

    let gt_ids: Vec<u64> = sorted_ids(gt);
    let pred_ids: Vec<u64> = sorted_ids(pred);
    let gpos: HashMap<u64, usize> = gt_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let ppos: HashMap<u64, usize> = pred_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();

    let mut overlap = vec![0usize; gt_ids.len() * pred_ids.len()];
    for (frame, gts) in &gf {
        let Some(preds) = pf.get(frame) else { continue };
        for g in gts {
            for p in preds {
                if iou(&g.bbox, &p.bbox) >= iou_threshold {
                    overlap[gpos[&g.id] * pred_ids.len() + ppos[&p.id]] += 1;
                }
            }
        }
    }

    let mut cost = CostMatrix::filled(gt_ids.len(), pred_ids.len(), f64::INFINITY);
    for i in 0..gt_ids.len() {
        for j in 0..pred_ids.len() {
            let n = overlap[i * pred_ids.len() + j];
            if n > 0 {
                cost.set(i, j, -(n as f64));
            }
        }
    }
    let idtp: usize =
        linear_assignment(&cost, 0.0).matches.iter().map(|&(i, j)| overlap[i * pred_ids.len() + j]).sum();
    let idfn = gt.len() - idtp;
    let idfp = pred.len() - idtp;
    Ok(IdentityMetrics { idf1: ratio(2.0 * idtp as f64, (2 * idtp + idfp + idfn) as f64), idtp, idfp, idfn })
}

/// Convenience wrapper returning only the IDF1 score.
pub fn idf1(gt: &[TrackRecord], pred: &[TrackRecord], iou_threshold: f64) -> Result<f64> {
    Ok(identity_metrics(gt, pred, iou_threshold)?.idf1)
}

fn sorted_ids(records: &[TrackRecord]) -> Vec<u64> {
    let mut ids: Vec<u64> = records.iter().map(|r| r.id).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// HOTA, DetA and AssA averaged over [`hota_alphas`]. At each threshold the
/// per-frame matching maximises the number of pairs with IoU at or above the
/// threshold, then their total IoU.
pub fn hota(gt: &[TrackRecord], pred: &[TrackRecord]) -> Result<HotaMetrics> {
    let gf = group(gt, "ground-truth")?;
    let pf = group(pred, "prediction")?;
    let empty = Vec::new();
    let frames = all_frames(&gf, &pf);

    let mut gt_count: HashMap<u64, usize> = HashMap::new();
    for r in gt {
        *gt_count.entry(r.id).or_default() += 1;
    }
    let mut pred_count: HashMap<u64, usize> = HashMap::new();
    for r in pred {
        *pred_count.entry(r.id).or_default() += 1;
    }

    let per_alpha = hota_alphas()
        .into_iter()
        .map(|alpha| {
            let mut pair_tp: BTreeMap<(u64, u64), usize> = BTreeMap::new();
            let mut tp = 0usize;
            for frame in &frames {
                let gts = gf.get(frame).unwrap_or(&empty);
                let preds = pf.get(frame).unwrap_or(&empty);
                for (i, j, _) in match_by_iou(gts, preds, alpha - ALPHA_EPS) {
                    *pair_tp.entry((gts[i].id, preds[j].id)).or_default() += 1;
                    tp += 1;
                }
            }
            // Each true positive of pair c contributes A(c); a pair with n TPs contributes n * A(c).
            let assoc_sum = pair_tp
                .iter()
                .map(|(&(g, p), &n)| {
                    let n = n as f64;
                    n * n / (gt_count[&g] as f64 + pred_count[&p] as f64 - n)
                })
                .sum();
            HotaAlpha { alpha, tp, fn_: gt.len() - tp, fp: pred.len() - tp, assoc_sum }
        })
        .collect();
    Ok(HotaMetrics::from_alphas(per_alpha))
}

/// Everything reported for one evaluation run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub mota: f64,
    pub fp: usize,
    pub fn_: usize,
    pub id_switches: usize,
    pub matches: usize,
    pub num_gt: usize,
    pub num_pred: usize,
    pub idf1: f64,
    pub idtp: usize,
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub per_alpha: Vec<HotaAlpha>,
    pub per_frame: Vec<FrameBreakdown>,
}

/// Runs all three metric families.
pub fn evaluate(gt: &[TrackRecord], pred: &[TrackRecord], iou_threshold: f64) -> Result<MetricsReport> {
    let clear = clear_metrics(gt, pred, iou_threshold)?;
    let id = identity_metrics(gt, pred, iou_threshold)?;
    let h = hota(gt, pred)?;
    Ok(MetricsReport {
        mota: clear.mota,
        fp: clear.fp,
        fn_: clear.fn_,
        id_switches: clear.id_switches,
        matches: clear.matches,
        num_gt: gt.len(),
        num_pred: pred.len(),
        idf1: id.idf1,
        idtp: id.idtp,
        hota: h.hota,
        deta: h.deta,
        assa: h.assa,
        per_alpha: h.per_alpha,
        per_frame: clear.per_frame,
    })
}

impl MetricsReport {
    /// Micro-averages several sequences by summing their counts.
    pub fn combine(reports: &[MetricsReport]) -> MetricsReport {
        let mut out = MetricsReport::default();
        for r in reports {
            out.fp += r.fp;
            out.fn_ += r.fn_;
            out.id_switches += r.id_switches;
            out.matches += r.matches;
            out.num_gt += r.num_gt;
            out.num_pred += r.num_pred;
            out.idtp += r.idtp;
        }
        out.mota = mota(out.fp, out.fn_, out.id_switches, out.num_gt);
        out.idf1 = ratio(2.0 * out.idtp as f64, (out.num_gt + out.num_pred) as f64);

        let mut per_alpha: Vec<HotaAlpha> =
            hota_alphas().into_iter().map(|alpha| HotaAlpha { alpha, ..Default::default() }).collect();
        for r in reports {
            for (acc, a) in per_alpha.iter_mut().zip(&r.per_alpha) {
                acc.tp += a.tp;
                acc.fn_ += a.fn_;
                acc.fp += a.fp;
                acc.assoc_sum += a.assoc_sum;
            }
        }
        let h = HotaMetrics::from_alphas(per_alpha);
        out.hota = h.hota;
        out.deta = h.deta;
        out.assa = h.assa;
        out.per_alpha = h.per_alpha;
        out
    }

    /// Fixed-column table: a header, one row per frame, and a totals row.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>7} {:>6} {:>6} {:>7} {:>6} {:>6} {:>6}",
            "frame", "gt", "pred", "match", "fp", "fn", "idsw"
        );
        for f in &self.per_frame {
            let _ = writeln!(
                s,
                "{:>7} {:>6} {:>6} {:>7} {:>6} {:>6} {:>6}",
                f.frame, f.num_gt, f.num_pred, f.matches, f.fp, f.fn_, f.id_switches
            );
        }
        let _ = writeln!(
            s,
            "{:>7} {:>6} {:>6} {:>7} {:>6} {:>6} {:>6}",
            "total", self.num_gt, self.num_pred, self.matches, self.fp, self.fn_, self.id_switches
        );
        let _ = writeln!(s, "{:>9} {:>9} {:>9} {:>9} {:>9}", "MOTA", "IDF1", "HOTA", "DetA", "AssA");
        let _ = writeln!(
            s,
            "{:>9.6} {:>9.6} {:>9.6} {:>9.6} {:>9.6}",
            self.mota, self.idf1, self.hota, self.deta, self.assa
        );
        s
    }

    /// `key=value` lines, one per headline metric.
    pub fn summary(&self) -> String {
        format!(
            "mota={:.6}\nidf1={:.6}\nhota={:.6}\ndeta={:.6}\nassa={:.6}\nfp={}\nfn={}\nid_switches={}\nnum_gt={}\nnum_pred={}\n",
            self.mota,
            self.idf1,
            self.hota,
            self.deta,
            self.assa,
            self.fp,
            self.fn_,
            self.id_switches,
            self.num_gt,
            self.num_pred
        )
    }
}

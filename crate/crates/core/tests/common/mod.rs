//! Small, slow, obviously-correct reference implementations used to check the
//! library. None of these call into the code they are checking.

#![allow(dead_code)]

use tcb::geometry::BBox;
use tcb::metrics::TrackRecord;

/// Minimum total cost over all maximum-cardinality matchings, by enumerating
/// every injective map from the smaller side into the larger one.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let transposed = rows > cols;
    let get = |small: usize, large: usize| {
        if transposed {
            cost[large][small]
        } else {
            cost[small][large]
        }
    };
    let (n_small, n_large) = if transposed { (cols, rows) } else { (rows, cols) };
    let mut used = vec![false; n_large];
    let mut best = f64::INFINITY;
    fn walk(
        i: usize,
        n_small: usize,
        n_large: usize,
        acc: f64,
        used: &mut [bool],
        best: &mut f64,
        get: &dyn Fn(usize, usize) -> f64,
    ) {
        if i == n_small {
            *best = best.min(acc);
            return;
        }
        for j in 0..n_large {
            if !used[j] {
                used[j] = true;
                walk(i + 1, n_small, n_large, acc + get(i, j), used, best, get);
                used[j] = false;
            }
        }
    }
    walk(0, n_small, n_large, 0.0, &mut used, &mut best, &get);
    best
}

/// Cosine of two `f32` vectors accumulated in `f64`; zero if either is zero.
pub fn naive_cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Row-major `[template][cell]` cosine responses for an `H x W x D` map.
pub fn naive_correlate(templates: &[Vec<f32>], data: &[f32], h: usize, w: usize, d: usize) -> Vec<Vec<f64>> {
    templates
        .iter()
        .map(|t| {
            let mut out = Vec::with_capacity(h * w);
            for y in 0..h {
                for x in 0..w {
                    let c = (y * w + x) * d;
                    out.push(naive_cosine(t, &data[c..c + d]));
                }
            }
            out
        })
        .collect()
}

/// Per-pixel logistic-MSE loss, averaged over maps, written out directly.
pub fn naive_loss(pred: &[Vec<f64>], gt: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        for (&m, &h) in p.iter().zip(g) {
            total += if h >= 1.0 { (1.0 - m) * m.ln() } else { (1.0 - h) * m * (1.0 - m).ln() };
        }
    }
    -total / pred.len() as f64
}

pub fn naive_gaussian(cx: f64, cy: f64, sigma: f64, x: f64, y: f64) -> f64 {
    let r2 = (x - cx).powi(2) + (y - cy).powi(2);
    (-r2 / (2.0 * sigma * sigma)).exp()
}

pub fn rec(frame: u32, id: u64, x: f64, y: f64, w: f64, h: f64) -> TrackRecord {
    TrackRecord { frame, id, bbox: BBox::new(x, y, w, h).unwrap(), conf: 1.0 }
}

/// Three frames, two ground-truth objects A=(0,0,10,10) and B=(50,0,10,10).
/// Predictions: frame 1 has p1 on A and p2 on B shifted by 1; frame 2 has p1
/// on A shifted by 2 and a stray p3; frame 3 has p1 on A and p4 on B shifted
/// by 3. One miss, one false positive and one identity switch.
pub fn hand_scenario() -> (Vec<TrackRecord>, Vec<TrackRecord>) {
    let gt =
        (1..=3).flat_map(|f| [rec(f, 1, 0.0, 0.0, 10.0, 10.0), rec(f, 2, 50.0, 0.0, 10.0, 10.0)]).collect();
    let pred = vec![
        rec(1, 1, 0.0, 0.0, 10.0, 10.0),
        rec(1, 2, 51.0, 0.0, 10.0, 10.0),
        rec(2, 1, 2.0, 0.0, 10.0, 10.0),
        rec(2, 3, 200.0, 200.0, 10.0, 10.0),
        rec(3, 1, 0.0, 0.0, 10.0, 10.0),
        rec(3, 4, 53.0, 0.0, 10.0, 10.0),
    ];
    (gt, pred)
}

fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    inter / (a.w * a.h + b.w * b.h - inter)
}

fn frames_of(records: &[TrackRecord]) -> Vec<u32> {
    let mut f: Vec<u32> = records.iter().map(|r| r.frame).collect();
    f.sort_unstable();
    f.dedup();
    f
}

fn ids_of(records: &[TrackRecord]) -> Vec<u64> {
    let mut ids: Vec<u64> = records.iter().map(|r| r.id).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// IDF1 by trying every partial one-to-one map from gt ids to predicted ids.
pub fn exhaustive_idf1(gt: &[TrackRecord], pred: &[TrackRecord], thr: f64) -> f64 {
    let gids = ids_of(gt);
    let pids = ids_of(pred);
    let overlap = |g: u64, p: u64| {
        gt.iter()
            .filter(|a| a.id == g)
            .filter(|a| {
                pred.iter().any(|b| b.id == p && b.frame == a.frame && box_iou(&a.bbox, &b.bbox) >= thr)
            })
            .count()
    };
    fn walk(
        i: usize,
        gids: &[u64],
        pids: &[u64],
        used: &mut Vec<bool>,
        acc: usize,
        f: &dyn Fn(u64, u64) -> usize,
    ) -> usize {
        if i == gids.len() {
            return acc;
        }
        let mut best = walk(i + 1, gids, pids, used, acc, f);
        for j in 0..pids.len() {
            if !used[j] {
                used[j] = true;
                best = best.max(walk(i + 1, gids, pids, used, acc + f(gids[i], pids[j]), f));
                used[j] = false;
            }
        }
        best
    }
    let idtp = walk(0, &gids, &pids, &mut vec![false; pids.len()], 0, &overlap);
    2.0 * idtp as f64 / (gt.len() + pred.len()) as f64
}

/// Best per-frame matching at threshold `thr` found by enumerating every
/// subset of eligible pairs: most pairs first, then largest total IoU.
fn exhaustive_frame_matching(gts: &[&TrackRecord], preds: &[&TrackRecord], thr: f64) -> Vec<(u64, u64)> {
    let mut pairs = Vec::new();
    for g in gts {
        for p in preds {
            let v = box_iou(&g.bbox, &p.bbox);
            if v >= thr - 1e-12 {
                pairs.push((g.id, p.id, v));
            }
        }
    }
    let mut best: (usize, f64, Vec<(u64, u64)>) = (0, 0.0, Vec::new());
    for mask in 0u32..(1 << pairs.len()) {
        let chosen: Vec<_> = (0..pairs.len()).filter(|&i| mask >> i & 1 == 1).map(|i| pairs[i]).collect();
        let mut gs: Vec<u64> = chosen.iter().map(|c| c.0).collect();
        let mut ps: Vec<u64> = chosen.iter().map(|c| c.1).collect();
        gs.sort_unstable();
        gs.dedup();
        ps.sort_unstable();
        ps.dedup();
        if gs.len() != chosen.len() || ps.len() != chosen.len() {
            continue;
        }
        let s: f64 = chosen.iter().map(|c| c.2).sum();
        if chosen.len() > best.0 || (chosen.len() == best.0 && s > best.1) {
            best = (chosen.len(), s, chosen.iter().map(|c| (c.0, c.1)).collect());
        }
    }
    best.2
}

/// `(hota, deta, assa)` averaged over thresholds 0.05, 0.10, ..., 0.95.
pub fn exhaustive_hota(gt: &[TrackRecord], pred: &[TrackRecord]) -> (f64, f64, f64) {
    let count = |rs: &[TrackRecord], id: u64| rs.iter().filter(|r| r.id == id).count() as f64;
    let frames = {
        let mut f = frames_of(gt);
        f.extend(frames_of(pred));
        f.sort_unstable();
        f.dedup();
        f
    };
    let (mut h, mut d, mut a) = (0.0, 0.0, 0.0);
    for k in 1..=19 {
        let alpha = 0.05 * k as f64;
        let mut pair_tp: Vec<((u64, u64), usize)> = Vec::new();
        let mut tp = 0usize;
        for &f in &frames {
            let gs: Vec<&TrackRecord> = gt.iter().filter(|r| r.frame == f).collect();
            let ps: Vec<&TrackRecord> = pred.iter().filter(|r| r.frame == f).collect();
            for pair in exhaustive_frame_matching(&gs, &ps, alpha) {
                tp += 1;
                match pair_tp.iter_mut().find(|(p, _)| *p == pair) {
                    Some((_, n)) => *n += 1,
                    None => pair_tp.push((pair, 1)),
                }
            }
        }
        let deta = tp as f64 / (gt.len() + pred.len() - tp) as f64;
        let assa = if tp == 0 {
            0.0
        } else {
            pair_tp
                .iter()
                .map(|&((g, p), n)| {
                    let n = n as f64;
                    n * n / (count(gt, g) + count(pred, p) - n)
                })
                .sum::<f64>()
                / tp as f64
        };
        h += (deta * assa).sqrt();
        d += deta;
        a += assa;
    }
    (h / 19.0, d / 19.0, a / 19.0)
}

/// Frozen outputs of the oracles above on [`hand_scenario`], cross-checked
/// against an independent script.
pub const HAND_MOTA: f64 = 0.5;
pub const HAND_IDF1: f64 = 8.0 / 12.0;
pub const HAND_HOTA: f64 = 0.5935444291626805;
pub const HAND_DETA: f64 = 0.5390977443609022;
pub const HAND_ASSA: f64 = 0.6666666666666669;

mod common;

use std::collections::{HashMap, HashSet};

use proptest::prelude::*;
use tcb::appearance::{
    correlate, correlate_serial, cosine, ema_update, Embedding, FeatureMap, Heatmap, TemplateSet,
};
use tcb::assignment::{linear_assignment, CostMatrix};
use tcb::geometry::{iou, BBox, ScoredBox};
use tcb::kalman::{kf_init, kf_predict, kf_update, KalmanParams};
use tcb::metrics::{evaluate, TrackRecord};
use tcb::sim::{generate_scenario, subsample, MotionKind, Provenance, ScenarioConfig, SubsampleRatio};
use tcb::tracker::{FrameInput, FusionMode, Tracker, TrackerConfig};
use tcb::training::{logistic_mse_loss, select_objects};

fn arb_box() -> impl Strategy<Value = BBox> {
    (-50.0..50.0f64, -50.0..50.0f64, 1.0..40.0f64, 1.0..40.0f64)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, w, h).unwrap())
}

fn arb_vec(d: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-1.0f32..1.0, d).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

/// A short random sequence of detections on a small arena, so boxes collide.
fn arb_sequence() -> impl Strategy<Value = Vec<Vec<(BBox, f64, Vec<f32>)>>> {
    let det = (arb_box(), 0.05..1.0f64, arb_vec(4));
    prop::collection::vec(prop::collection::vec(det, 0..6), 1..12)
}

fn run(seq: &[Vec<(BBox, f64, Vec<f32>)>], cfg: &TrackerConfig) -> (Vec<Vec<TrackRecord>>, Vec<usize>) {
    let mut tracker = Tracker::new(cfg.clone()).unwrap();
    let mut out = Vec::new();
    let mut stage1 = Vec::new();
    for (f, dets) in seq.iter().enumerate() {
        let boxes = dets.iter().map(|(b, c, _)| ScoredBox::single_class(*b, *c).unwrap()).collect();
        let embs = dets.iter().map(|(_, _, e)| Embedding(e.clone())).collect();
        let input = FrameInput::new(f as u32 + 1, boxes, embs).unwrap();
        out.push(tracker.step(&input).unwrap());
        stage1.push(tracker.last_counts().stage1);
    }
    (out, stage1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn iou_symmetric_and_reflexive(a in arb_box(), b in arb_box()) {
        prop_assert_eq!(iou(&a, &b), iou(&b, &a));
        prop_assert_eq!(iou(&a, &a), 1.0);
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn assignment_indices_partition(rows in 0usize..7, cols in 0usize..7, seed in any::<u64>(), gate in 0.0..1.2f64) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.random_range(0.0..1.0)).collect();
        let cost = CostMatrix::new(rows, cols, data).unwrap();
        let res = linear_assignment(&cost, gate);
        let mut r: Vec<usize> = res.matches.iter().map(|m| m.0).chain(res.unmatched_tracks.iter().copied()).collect();
        let mut c: Vec<usize> = res.matches.iter().map(|m| m.1).chain(res.unmatched_detections.iter().copied()).collect();
        r.sort_unstable();
        c.sort_unstable();
        prop_assert_eq!(r, (0..rows).collect::<Vec<_>>());
        prop_assert_eq!(c, (0..cols).collect::<Vec<_>>());
        for &(i, j) in &res.matches {
            prop_assert!(cost.get(i, j) <= gate);
        }
    }

    #[test]
    fn correlation_scale_invariant_and_bit_stable(
        cells in prop::collection::vec(arb_vec(6), 9),
        t in prop::collection::vec(arb_vec(6), 1..5),
        scale in 0.01f32..100.0,
    ) {
        let data: Vec<f32> = cells.concat();
        let fmap = FeatureMap::new(3, 3, 6, data.clone()).unwrap();
        let ids: Vec<u64> = (0..t.len() as u64).collect();
        let set = TemplateSet::new(t.iter().cloned().map(Embedding).collect(), ids.clone()).unwrap();
        let par = correlate(&set, &fmap).unwrap();
        prop_assert_eq!(&par, &correlate_serial(&set, &fmap).unwrap());
        for h in &par.heatmaps {
            prop_assert!(h.values.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        let scaled_t = TemplateSet::new(t.iter().map(|v| Embedding(v.iter().map(|x| x * scale).collect())).collect(), ids).unwrap();
        let scaled_map = FeatureMap::new(3, 3, 6, data.iter().map(|x| x * scale).collect()).unwrap();
        let other = correlate(&scaled_t, &scaled_map).unwrap();
        for (a, b) in par.heatmaps.iter().zip(&other.heatmaps) {
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn cosine_symmetric(a in arb_vec(8), b in arb_vec(8)) {
        let (a, b) = (Embedding(a), Embedding(b));
        prop_assert!((cosine(&a, &b).unwrap() - cosine(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ema_output_is_unit(a in arb_vec(8), b in arb_vec(8), gamma in 0.0..=1.0f64) {
        let a = Embedding(a).normalized().unwrap();
        let b = Embedding(b).normalized().unwrap();
        if let Ok(e) = ema_update(&a, &b, gamma) {
            prop_assert!((e.norm() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn loss_nonnegative_and_gradient_signs(
        m in prop::collection::vec(0.001..0.999f64, 16),
        h in prop::collection::vec(0.0..1.0f64, 16),
        peak in 0usize..16,
    ) {
        let mut h = h;
        h[peak] = 1.0;
        let r = logistic_mse_loss(&[Heatmap::new(4, 4, m).unwrap()], &[Heatmap::new(4, 4, h.clone()).unwrap()]).unwrap();
        prop_assert!(r.loss >= 0.0);
        for (g, t) in r.gradient[0].values.iter().zip(&h) {
            if *t >= 1.0 {
                prop_assert!(*g <= 0.0);
            } else if *t == 0.0 {
                prop_assert!(*g >= 0.0);
            }
        }
    }

    #[test]
    fn selection_ignores_candidate_order(
        cands in prop::collection::vec(arb_box(), 1..6),
        gts in prop::collection::vec(arb_box(), 1..4),
        rot in 0usize..6,
    ) {
        let with_emb: Vec<(BBox, Embedding)> = cands.iter().map(|b| (*b, Embedding(vec![1.0]))).collect();
        let ids: Vec<u64> = (0..gts.len() as u64).collect();
        let mut rotated = with_emb.clone();
        rotated.rotate_left(rot % with_emb.len());
        let a = select_objects(&with_emb, &gts, &ids, 0.3).unwrap();
        let b = select_objects(&rotated, &gts, &ids, 0.3).unwrap();
        prop_assert_eq!(a.selected_ids, b.selected_ids);
        prop_assert_eq!(a.scores, b.scores);
    }

    #[test]
    fn tracker_ids_unique_and_removed_never_return(seq in arb_sequence(), max_age in 0u32..4) {
        let cfg = TrackerConfig { max_age, ..TrackerConfig::default() };
        let (out, _) = run(&seq, &cfg);
        let mut last_seen: HashMap<u64, usize> = HashMap::new();
        for (f, recs) in out.iter().enumerate() {
            let ids: HashSet<u64> = recs.iter().map(|r| r.id).collect();
            prop_assert_eq!(ids.len(), recs.len());
            for id in ids {
                if let Some(&prev) = last_seen.get(&id) {
                    // a gap longer than max_age means the track was removed in between
                    prop_assert!(f - prev <= max_age as usize + 1, "id {} reappeared after {} frames", id, f - prev);
                }
                last_seen.insert(id, f);
            }
        }
    }

    #[test]
    fn tracker_is_deterministic(seq in arb_sequence()) {
        let cfg = TrackerConfig::default();
        prop_assert_eq!(run(&seq, &cfg), run(&seq, &cfg));
    }

    #[test]
    fn product_equals_iou_only_when_appearance_and_confidence_are_flat(boxes in prop::collection::vec(prop::collection::vec(arb_box(), 0..5), 1..10)) {
        let seq: Vec<Vec<(BBox, f64, Vec<f32>)>> = boxes
            .into_iter()
            .map(|f| f.into_iter().map(|b| (b, 1.0, vec![1.0, 0.0])).collect())
            .collect();
        let product = run(&seq, &TrackerConfig { fusion: FusionMode::Product, ..TrackerConfig::default() });
        let iou_only = run(&seq, &TrackerConfig { fusion: FusionMode::IouOnly, ..TrackerConfig::default() });
        prop_assert_eq!(product.0, iou_only.0);
    }

    #[test]
    fn raising_stage1_gate_never_adds_first_frame_matches(
        first in prop::collection::vec(arb_box(), 1..6),
        second in prop::collection::vec((arb_box(), 0.05..1.0f64, arb_vec(4)), 0..6),
        lo in 0.0..0.5f64,
        bump in 0.0..0.5f64,
    ) {
        // Compare stage-1 counts on the same track state: one birth frame, then one matching frame.
        let seq = vec![first.into_iter().map(|b| (b, 1.0, vec![1.0, 0.5, 0.0, 0.0])).collect(), second];
        let (_, a) = run(&seq, &TrackerConfig { stage1_min_score: lo, ..TrackerConfig::default() });
        let (_, b) = run(&seq, &TrackerConfig { stage1_min_score: lo + bump, ..TrackerConfig::default() });
        prop_assert!(b[1] <= a[1]);
    }

    #[test]
    fn metrics_invariant_to_renaming_predictions(seed in 0u64..1000, offset in 1u64..1000) {
        let cfg = ScenarioConfig { num_agents: 4, frames: 15, embedding_dim: 16, seed, ..ScenarioConfig::default() };
        let bundle = generate_scenario(&cfg).unwrap();
        let pred = tcb::sim::run_tracker(&bundle, &TrackerConfig::default()).unwrap();
        let renamed: Vec<TrackRecord> = pred.iter().map(|r| TrackRecord { id: r.id * 7 + offset, ..*r }).collect();
        let a = evaluate(&bundle.gt, &pred, 0.5).unwrap();
        let b = evaluate(&bundle.gt, &renamed, 0.5).unwrap();
        prop_assert_eq!(a.mota, b.mota);
        prop_assert_eq!(a.idf1, b.idf1);
        prop_assert_eq!(a.hota, b.hota);
        prop_assert_eq!(a.id_switches, b.id_switches);
        prop_assert!(a.mota <= 1.0);
    }

    #[test]
    fn subsampling_keeps_correspondence(seed in 0u64..1000, motion in 0usize..3) {
        let motion = [MotionKind::Linear, MotionKind::Crossing, MotionKind::SinusoidalDance][motion];
        let cfg = ScenarioConfig { num_agents: 5, frames: 21, embedding_dim: 16, motion, seed, ..ScenarioConfig::default() };
        let full = generate_scenario(&cfg).unwrap();
        for ratio in [SubsampleRatio::Half, SubsampleRatio::Third] {
            let sub = subsample(&full, ratio);
            for (k, frame) in sub.frames.iter().enumerate() {
                let orig = (k as u32) * ratio.step();
                prop_assert_eq!(frame.frame_index, k as u32 + 1);
                prop_assert_eq!(&frame.detections, &full.frames[orig as usize].detections);
                prop_assert_eq!(&sub.provenance[k], &full.provenance[orig as usize]);
                for prov in &sub.provenance[k] {
                    if let Provenance::Agent(id) = prov {
                        prop_assert!(sub.gt.iter().any(|r| r.frame == frame.frame_index && r.id == *id));
                    }
                }
            }
        }
    }
}

#[test]
fn kalman_covariance_psd_over_long_random_run() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let params = KalmanParams::default();
    let mut s = kf_init(&BBox::new(100.0, 100.0, 40.0, 80.0).unwrap(), &params);
    for _ in 0..1000 {
        s = kf_predict(&s, &params);
        if rng.random_bool(0.7) {
            let b = s.to_bbox();
            let obs = BBox::new(
                b.x + rng.random_range(-5.0..5.0),
                b.y + rng.random_range(-5.0..5.0),
                (b.w + rng.random_range(-2.0..2.0)).max(5.0),
                (b.h + rng.random_range(-2.0..2.0)).max(5.0),
            )
            .unwrap();
            s = kf_update(&s, &obs, &params).unwrap();
        }
        let c = s.covariance;
        assert!((c - c.transpose()).abs().max() < 1e-9);
        let eig = c.symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e >= -1e-9), "{eig}");
        assert!(s.mean[2] > 0.0 && s.mean[3] > 0.0);
    }
}

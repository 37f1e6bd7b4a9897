//! Workflows behind the `tcb` binary. Each returns the text it would print so
//! the same paths are exercised by tests and examples.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::appearance::{Embedding, Heatmap, DEFAULT_DIM};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geometry::{BBox, ScoredBox};
use crate::io::{self, SequenceData, SequenceMeta};
use crate::metrics::{evaluate, MetricsReport};
use crate::sim::{generate_scenario, run_and_score, subsample, ScenarioConfig, SubsampleRatio};
use crate::tracker::{FrameInput, FusionMode, Tracker, TrackerConfig};
use crate::training::{gaussian_heatmap, logistic_mse_loss, GaussianSpec};

/// Runs the tracker over a detection file and its embeddings, writing
/// results. Returns a one-line summary.
pub fn track(dets: &Path, embs: &Path, config: &TrackerConfig, out: &Path) -> Result<String> {
    let detections = io::read_detections(dets)?;
    let embeddings = io::read_embeddings(embs)?;
    let frames = io::assemble_frames(&detections, &embeddings, None)?;
    let mut tracker = Tracker::new(config.clone())?;
    let mut records = Vec::new();
    for f in &frames {
        records.extend(tracker.step(f)?);
    }
    io::write_results(out, &records)?;
    let ids: std::collections::BTreeSet<u64> = records.iter().map(|r| r.id).collect();
    Ok(format!(
        "frames={} records={} tracks={} fusion={} kalman={}",
        frames.len(),
        records.len(),
        ids.len(),
        config.fusion.name(),
        config.use_kalman
    ))
}

/// Scores a results file against ground truth: table, blank line, summary.
pub fn eval(gt: &Path, results: &Path, iou_threshold: f64) -> Result<String> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::InvalidConfig(format!("iou threshold {iou_threshold} outside (0, 1]")));
    }
    let gt = io::read_track_records(gt)?;
    let pred = io::read_track_records(results)?;
    let report = evaluate(&gt, &pred, iou_threshold)?;
    Ok(format!("{}\n{}", report.table(), report.summary()))
}

/// Generates a scenario and writes it as a sequence directory plus the
/// resolved `config.txt`.
pub fn simulate(config: &RunConfig, out: &Path) -> Result<String> {
    let bundle = generate_scenario(&config.scenario)?;
    let sc = &config.scenario;
    let data = SequenceData {
        meta: SequenceMeta {
            name: format!("{}-seed{}", sc.motion.name(), sc.seed),
            fps: config.fps,
            frame_count: sc.frames,
            image_size: (sc.arena.0.round() as u32, sc.arena.1.round() as u32),
            embedding_dim: sc.embedding_dim,
        },
        frames: bundle.frames,
        gt: bundle.gt,
        provenance: Some(bundle.provenance),
    };
    data.write(out)?;
    let cfg_path = out.join("config.txt");
    std::fs::write(&cfg_path, config.render()).map_err(|e| Error::io(&cfg_path, e))?;
    let dets: usize = data.frames.iter().map(|f| f.detections.len()).sum();
    Ok(format!(
        "wrote {} frames, {} detections, {} gt rows to {}",
        data.frames.len(),
        dets,
        data.gt.len(),
        out.display()
    ))
}

pub fn subsample_dir(input: &Path, ratio: SubsampleRatio, out: &Path) -> Result<String> {
    let data = SequenceData::read(input)?.subsample(ratio);
    data.write(out)?;
    Ok(format!("ratio {}: {} frames written to {}", ratio.label(), data.frames.len(), out.display()))
}

/// Switch for the Kalman axis of an ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KalmanChoice {
    On,
    Off,
    Both,
}

impl KalmanChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "on" => Ok(KalmanChoice::On),
            "off" => Ok(KalmanChoice::Off),
            "both" => Ok(KalmanChoice::Both),
            _ => Err(Error::InvalidConfig(format!("kalman '{s}' must be on, off or both"))),
        }
    }

    fn values(self) -> &'static [bool] {
        match self {
            KalmanChoice::On => &[true],
            KalmanChoice::Off => &[false],
            KalmanChoice::Both => &[true, false],
        }
    }
}

/// Linear-fusion weights swept when `linear` is requested without a value.
pub const DELTA_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Expands a comma list such as `product,linear,iou` or `linear:0.3`.
pub fn parse_modes(list: &str) -> Result<Vec<FusionMode>> {
    let mut modes = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if item == "linear" {
            modes.extend(DELTA_GRID.iter().map(|&delta| FusionMode::Linear { delta }));
        } else {
            modes.push(crate::config::parse_fusion(item, 0.5)?);
        }
    }
    if modes.is_empty() {
        return Err(Error::InvalidConfig("no fusion modes given".into()));
    }
    Ok(modes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub fusion: FusionMode,
    pub use_kalman: bool,
    pub ratio: SubsampleRatio,
    /// Micro-averaged over seeds.
    pub report: MetricsReport,
    pub per_seed: Vec<MetricsReport>,
}

#[derive(Debug, Clone)]
pub struct AblationPlan {
    pub scenario: ScenarioConfig,
    pub tracker: TrackerConfig,
    pub modes: Vec<FusionMode>,
    pub kalman: KalmanChoice,
    pub ratios: Vec<SubsampleRatio>,
    pub seeds: u64,
    pub iou_threshold: f64,
}

/// Scores every (mode, kalman, ratio) cell over seeds `scenario.seed ..
/// scenario.seed + seeds`. Seeds run in parallel; results are ordered.
pub fn run_ablation(plan: &AblationPlan) -> Result<Vec<AblationRow>> {
    if plan.seeds == 0 {
        return Err(Error::InvalidConfig("seeds must be at least 1".into()));
    }
    let bundles: Vec<_> = (0..plan.seeds)
        .into_par_iter()
        .map(|k| {
            let sc = ScenarioConfig { seed: plan.scenario.seed + k, ..plan.scenario.clone() };
            generate_scenario(&sc)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &ratio in &plan.ratios {
        let views: Vec<_> = bundles.iter().map(|b| subsample(b, ratio)).collect();
        for &fusion in &plan.modes {
            for &use_kalman in plan.kalman.values() {
                let cfg = TrackerConfig { fusion, use_kalman, ..plan.tracker.clone() };
                cfg.validate()?;
                let per_seed: Vec<MetricsReport> = views
                    .par_iter()
                    .map(|b| {
                        let results = crate::sim::run_tracker(b, &cfg)?;
                        evaluate(&b.gt, &results, plan.iou_threshold)
                    })
                    .collect::<Result<_>>()?;
                rows.push(AblationRow {
                    fusion,
                    use_kalman,
                    ratio,
                    report: MetricsReport::combine(&per_seed),
                    per_seed,
                });
            }
        }
    }
    Ok(rows)
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<14} {:>6} {:>6} {:>8} {:>8} {:>8} {:>8} {:>8} {:>6}",
        "fusion", "kalman", "ratio", "HOTA", "DetA", "AssA", "MOTA", "IDF1", "IDSW"
    );
    for r in rows {
        let m = &r.report;
        let _ = writeln!(
            out,
            "{:<14} {:>6} {:>6} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>6}",
            r.fusion.name(),
            if r.use_kalman { "on" } else { "off" },
            r.ratio.label(),
            100.0 * m.hota,
            100.0 * m.deta,
            100.0 * m.assa,
            100.0 * m.mota,
            100.0 * m.idf1,
            m.id_switches
        );
    }
    out
}

/// Random loss instance: predictions strictly inside (0, 1) and gaussian
/// targets at integer centers, so every map has one cell with h = 1.
pub fn random_loss_instance(
    height: usize,
    width: usize,
    k: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<Heatmap>, Vec<Heatmap>)> {
    let mut pred = Vec::with_capacity(k);
    let mut gt = Vec::with_capacity(k);
    for _ in 0..k {
        let values = (0..height * width).map(|_| rng.random_range(0.05..0.95)).collect();
        pred.push(Heatmap::new(height, width, values)?);
        let spec = GaussianSpec {
            cx: rng.random_range(0..width) as f64,
            cy: rng.random_range(0..height) as f64,
            sigma: rng.random_range(0.5..3.0),
        };
        gt.push(gaussian_heatmap(&spec, height, width)?);
    }
    Ok((pred, gt))
}

/// Largest relative gap between the analytic gradient and central
/// differences with the given step. Relative to `max(|a|, |fd|, 1e-8)`.
pub fn gradient_check(pred: &[Heatmap], gt: &[Heatmap], step: f64) -> Result<f64> {
    let analytic = logistic_mse_loss(pred, gt)?.gradient;
    let mut probe = pred.to_vec();
    let mut worst: f64 = 0.0;
    for t in 0..pred.len() {
        for i in 0..pred[t].values.len() {
            let m = pred[t].values[i];
            probe[t].values[i] = m + step;
            let up = logistic_mse_loss(&probe, gt)?.loss;
            probe[t].values[i] = m - step;
            let down = logistic_mse_loss(&probe, gt)?.loss;
            probe[t].values[i] = m;
            let fd = (up - down) / (2.0 * step);
            let a = analytic[t].values[i];
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-8));
        }
    }
    Ok(worst)
}

pub fn parse_size(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidConfig(format!("size '{s}' must look like HxW"));
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    if h == 0 || w == 0 {
        return Err(bad());
    }
    Ok((h, w))
}

pub fn losscheck(height: usize, width: usize, k: usize, seed: u64) -> Result<String> {
    if k == 0 {
        return Err(Error::InvalidConfig("templates must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (pred, gt) = random_loss_instance(height, width, k, &mut rng)?;
    let loss = logistic_mse_loss(&pred, &gt)?.loss;
    let err = gradient_check(&pred, &gt, 1e-4)?;
    Ok(format!("loss={loss:.6}\nmax_rel_grad_error={err:.3e}"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub tracks: usize,
    pub detections: usize,
    /// Per-step wall time in milliseconds, in frame order.
    pub samples_ms: Vec<f64>,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
}

impl BenchReport {
    pub fn render(&self) -> String {
        format!(
            "tracks={} dets={} steps={} p50_ms={:.3} p95_ms={:.3} p99_ms={:.3}",
            self.tracks,
            self.detections,
            self.samples_ms.len(),
            self.p50,
            self.p95,
            self.p99
        )
    }
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn unit_vector(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Times `Tracker::step` with `tracks` live tracks and `dets` detections per
/// frame at embedding dimension `dim`. Frame 1 creates the tracks and is not
/// timed; the remaining `frames - 1` steps are.
pub fn bench_association(
    tracks: usize,
    dets: usize,
    frames: u32,
    dim: usize,
    seed: u64,
) -> Result<BenchReport> {
    if frames < 2 || tracks == 0 || dim == 0 {
        return Err(Error::InvalidConfig("bench needs frames >= 2, tracks >= 1, dim >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Agents on a loose grid so boxes overlap their neighbours a little.
    let cols = (tracks as f64).sqrt().ceil() as usize;
    let agents: Vec<(f64, f64, Vec<f64>)> = (0..tracks.max(dets))
        .map(|i| {
            let (gx, gy) = ((i % cols) as f64, (i / cols) as f64);
            (gx * 30.0, gy * 60.0, unit_vector(dim, &mut rng))
        })
        .collect();
    let make_frame = |f: u32, count: usize, rng: &mut ChaCha8Rng| -> Result<FrameInput> {
        let mut boxes = Vec::with_capacity(count);
        let mut embs = Vec::with_capacity(count);
        for (x, y, proto) in agents.iter().take(count) {
            let jitter = |rng: &mut ChaCha8Rng| rng.random_range(-2.0..2.0);
            let b = BBox::new(x + jitter(rng) + f as f64, y + jitter(rng), 40.0, 80.0)?;
            boxes.push(ScoredBox::single_class(b, rng.random_range(0.3..1.0))?);
            let e: Vec<f32> = proto
                .iter()
                .map(|&p| {
                    let z: f64 = StandardNormal.sample(rng);
                    (p + 0.02 * z) as f32
                })
                .collect();
            embs.push(Embedding(e));
        }
        FrameInput::new(f, boxes, embs)
    };
    let cfg = TrackerConfig { new_track_min_conf: 0.0, ..TrackerConfig::default() };
    let mut tracker = Tracker::new(cfg)?;
    tracker.step(&make_frame(1, tracks, &mut rng)?)?;
    let mut samples = Vec::with_capacity(frames as usize - 1);
    for f in 2..=frames {
        let input = make_frame(f, dets, &mut rng)?;
        let start = Instant::now();
        std::hint::black_box(tracker.step(&input)?);
        samples.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BenchReport {
        tracks,
        detections: dets,
        p50: percentile(&sorted, 50.0),
        p95: percentile(&sorted, 95.0),
        p99: percentile(&sorted, 99.0),
        samples_ms: samples,
    })
}

pub fn bench(tracks: usize, dets: usize, frames: u32) -> Result<String> {
    Ok(bench_association(tracks, dets, frames, DEFAULT_DIM, 0)?.render())
}

/// Scores one generated scenario under one tracker config.
pub fn score_scenario(scenario: &ScenarioConfig, tracker: &TrackerConfig) -> Result<MetricsReport> {
    run_and_score(&generate_scenario(scenario)?, tracker)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 50.0), 50.0);
        assert_eq!(percentile(&v, 95.0), 95.0);
        assert_eq!(percentile(&v, 99.0), 99.0);
        assert_eq!(percentile(&[3.0], 99.0), 3.0);
    }

    #[test]
    fn modes_expand_linear() {
        let m = parse_modes("product,linear,iou").unwrap();
        assert_eq!(m.len(), 11);
        assert_eq!(m[1], FusionMode::Linear { delta: 0.1 });
        assert_eq!(parse_modes("linear:0.25").unwrap(), vec![FusionMode::Linear { delta: 0.25 }]);
        assert!(parse_modes("").is_err());
        assert!(parse_modes("cosine").is_err());
    }

    #[test]
    fn size_parsing() {
        assert_eq!(parse_size("16x12").unwrap(), (16, 12));
        assert!(parse_size("16").is_err());
        assert!(parse_size("0x4").is_err());
    }

    #[test]
    fn losscheck_small() {
        let out = losscheck(8, 8, 2, 3).unwrap();
        let err: f64 = out.lines().nth(1).unwrap().split('=').nth(1).unwrap().parse().unwrap();
        assert!(err < 1e-4, "{out}");
    }

    #[test]
    fn bench_keeps_tracks() {
        let r = bench_association(20, 20, 5, 16, 1).unwrap();
        assert_eq!(r.samples_ms.len(), 4);
        assert!(r.p50 <= r.p95 && r.p95 <= r.p99);
    }
}

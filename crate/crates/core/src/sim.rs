//! Deterministic synthetic scenes: ground-truth trajectories, noisy
//! detections with identity-linked embeddings, frame subsampling, and a
//! harness that runs the tracker and scores it.
//!
//! Every concern draws from its own ChaCha stream derived from the seed, so
//! turning one noise knob never perturbs the trajectories or the other noise.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::appearance::{Embedding, DEFAULT_DIM};
use crate::error::{Error, Result};
use crate::geometry::{BBox, ScoredBox};
use crate::metrics::{evaluate, MetricsReport, TrackRecord};
use crate::tracker::{FrameInput, Tracker, TrackerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionKind {
    /// Constant velocity, reflecting off the arena borders.
    Linear,
    /// Pairs of agents that pass through each other at staggered times.
    Crossing,
    /// Sinusoidal velocity with frequent direction reversals.
    SinusoidalDance,
}

impl MotionKind {
    pub fn name(&self) -> &'static str {
        match self {
            MotionKind::Linear => "linear",
            MotionKind::Crossing => "crossing",
            MotionKind::SinusoidalDance => "sinusoidal-dance",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(MotionKind::Linear),
            "crossing" => Ok(MotionKind::Crossing),
            "sinusoidal-dance" | "dance" => Ok(MotionKind::SinusoidalDance),
            other => Err(Error::InvalidConfig(format!("unknown motion '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub num_agents: usize,
    pub frames: u32,
    pub arena: (f64, f64),
    pub motion: MotionKind,
    /// Agent box (width, height).
    pub box_size: (f64, f64),
    /// Multiplies every agent velocity.
    pub speed_scale: f64,
    pub embedding_dim: usize,
    /// Cosine between any two identity prototypes.
    pub appearance_gap: f64,
    pub embed_noise_sigma: f64,
    pub jitter_sigma: f64,
    pub drop_prob: f64,
    /// Expected false positives per frame.
    pub fp_rate: f64,
    pub conf_range: (f64, f64),
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            num_agents: 8,
            frames: 100,
            arena: (1280.0, 720.0),
            motion: MotionKind::Linear,
            box_size: (40.0, 80.0),
            speed_scale: 1.0,
            embedding_dim: DEFAULT_DIM,
            appearance_gap: 0.3,
            embed_noise_sigma: 0.02,
            jitter_sigma: 1.0,
            drop_prob: 0.05,
            fp_rate: 0.5,
            conf_range: (0.5, 1.0),
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// Same scene with every noise source switched off: exact boxes,
    /// confidence 1, no drops, no clutter, noiseless embeddings.
    pub fn noise_free(&self) -> Self {
        ScenarioConfig {
            embed_noise_sigma: 0.0,
            jitter_sigma: 0.0,
            drop_prob: 0.0,
            fp_rate: 0.0,
            conf_range: (1.0, 1.0),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.frames < 2 {
            return bad(format!("frames = {} must be at least 2", self.frames));
        }
        if !(0.0..1.0).contains(&self.appearance_gap) {
            return bad(format!("appearance_gap = {} outside [0, 1)", self.appearance_gap));
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return bad(format!("drop_prob = {} outside [0, 1]", self.drop_prob));
        }
        let (lo, hi) = self.conf_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return bad(format!("conf_range ({lo}, {hi}) invalid"));
        }
        if !(self.fp_rate >= 0.0 && self.fp_rate.is_finite()) {
            return bad(format!("fp_rate = {} invalid", self.fp_rate));
        }
        if !(self.speed_scale >= 0.0 && self.speed_scale.is_finite()) {
            return bad(format!("speed_scale = {} invalid", self.speed_scale));
        }
        if !(self.jitter_sigma >= 0.0 && self.embed_noise_sigma >= 0.0) {
            return bad("noise levels must be non-negative".into());
        }
        let (bw, bh) = self.box_size;
        let (aw, ah) = self.arena;
        if !(bw > 0.0 && bh > 0.0 && aw > bw && ah > bh) {
            return bad(format!("box {bw}x{bh} does not fit arena {aw}x{ah}"));
        }
        // A shared mixing direction needs one spare dimension when gap > 0.
        let needed = self.num_agents + usize::from(self.appearance_gap > 0.0);
        if self.embedding_dim == 0 || needed > self.embedding_dim {
            return bad(format!(
                "{} agents with appearance_gap {} need {needed} embedding dims, have {}",
                self.num_agents, self.appearance_gap, self.embedding_dim
            ));
        }
        Ok(())
    }
}

/// Where a simulated detection came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Agent(u64),
    FalsePositive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBundle {
    pub config: ScenarioConfig,
    pub gt: Vec<TrackRecord>,
    pub frames: Vec<FrameInput>,
    /// Aligned with each frame's detections.
    pub provenance: Vec<Vec<Provenance>>,
}

const STREAM_MOTION: u64 = 1;
const STREAM_APPEARANCE: u64 = 2;
const STREAM_DETECTION: u64 = 3;
const STREAM_CLUTTER: u64 = 4;
const STREAM_EMBED_NOISE: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gauss(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Folds a coordinate into `[0, len]` as if bouncing between the walls.
fn reflect(p: f64, len: f64) -> f64 {
    let q = p.rem_euclid(2.0 * len);
    if q > len {
        2.0 * len - q
    } else {
        q
    }
}

/// Per-agent trajectory of top-left corners before reflection.
trait Trajectory {
    fn at(&self, t: f64) -> (f64, f64);
}

struct LinearPath {
    start: (f64, f64),
    vel: (f64, f64),
}

impl Trajectory for LinearPath {
    fn at(&self, t: f64) -> (f64, f64) {
        (self.start.0 + self.vel.0 * t, self.start.1 + self.vel.1 * t)
    }
}

struct DancePath {
    start: (f64, f64),
    drift: (f64, f64),
    amp: (f64, f64),
    omega: (f64, f64),
    phase: (f64, f64),
}

impl Trajectory for DancePath {
    fn at(&self, t: f64) -> (f64, f64) {
        // Integral of drift + amp * sin(omega t + phase).
        let axis =
            |s: f64, d: f64, a: f64, w: f64, ph: f64| s + d * t + a / w * (ph.cos() - (w * t + ph).cos());
        (
            axis(self.start.0, self.drift.0, self.amp.0, self.omega.0, self.phase.0),
            axis(self.start.1, self.drift.1, self.amp.1, self.omega.1, self.phase.1),
        )
    }
}

fn build_paths(cfg: &ScenarioConfig) -> Vec<Box<dyn Trajectory>> {
    let mut rng = stream(cfg.seed, STREAM_MOTION);
    let (lx, ly) = (cfg.arena.0 - cfg.box_size.0, cfg.arena.1 - cfg.box_size.1);
    let n = cfg.num_agents;
    let mut paths: Vec<Box<dyn Trajectory>> = Vec::with_capacity(n);
    match cfg.motion {
        MotionKind::Linear => {
            for _ in 0..n {
                let speed = cfg.speed_scale * rng.random_range(1.0..4.0);
                let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                paths.push(Box::new(LinearPath {
                    start: (rng.random_range(0.0..lx), rng.random_range(0.0..ly)),
                    vel: (speed * angle.cos(), speed * angle.sin()),
                }));
            }
        }
        MotionKind::Crossing => {
            // Agents 2k and 2k+1 approach a shared meeting point head-on and
            // coincide at frame `meet`; meetings are spread over the sequence.
            let frames = cfg.frames as f64;
            for k in 0..n.div_ceil(2) {
                let meet = frames * (0.25 + 0.5 * rng.random::<f64>());
                let centre = (rng.random_range(0.2 * lx..0.8 * lx), rng.random_range(0.2 * ly..0.8 * ly));
                let speed = cfg.speed_scale * rng.random_range(1.5..3.0);
                let angle: f64 = rng.random_range(-0.3..0.3);
                let vel = (speed * angle.cos(), speed * angle.sin());
                let t0 = meet - 1.0;
                paths.push(Box::new(LinearPath {
                    start: (centre.0 - vel.0 * t0, centre.1 - vel.1 * t0),
                    vel,
                }));
                if 2 * k + 1 < n {
                    let back = (-vel.0, -vel.1);
                    paths.push(Box::new(LinearPath {
                        start: (centre.0 - back.0 * t0, centre.1 - back.1 * t0),
                        vel: back,
                    }));
                }
            }
        }
        MotionKind::SinusoidalDance => {
            // Dancers hold slots in a tight grid and sway into their
            // neighbours' space while the whole formation drifts.
            let (bw, bh) = cfg.box_size;
            let cols = ((n as f64 * 2.0).sqrt().ceil() as usize).max(1);
            let rows = n.div_ceil(cols);
            let (sx, sy) = (1.6 * bw, 1.1 * bh);
            let origin = ((lx - sx * (cols - 1) as f64) / 2.0, (ly - sy * (rows - 1) as f64) / 2.0);
            let drift_angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let drift =
                (cfg.speed_scale * 0.5 * drift_angle.cos(), cfg.speed_scale * 0.5 * drift_angle.sin());
            for i in 0..n {
                let mut pick = |lo: f64, hi: f64| rng.random_range(lo..hi);
                let slot = (origin.0 + sx * (i % cols) as f64, origin.1 + sy * (i / cols) as f64);
                // Sway amplitude is `reach` pixels; peak speed is reach * omega.
                let omega = (pick(0.04, 0.1), pick(0.04, 0.1));
                let reach = (pick(0.6, 1.2) * sx, pick(0.25, 0.6) * sy);
                paths.push(Box::new(DancePath {
                    start: slot,
                    drift,
                    amp: (cfg.speed_scale * reach.0 * omega.0, cfg.speed_scale * reach.1 * omega.1),
                    omega,
                    phase: (pick(0.0, std::f64::consts::TAU), pick(0.0, std::f64::consts::TAU)),
                }));
            }
        }
    }
    paths
}

/// Unit prototypes whose pairwise cosine equals `gap`: orthonormal vectors
/// mixed with one shared orthonormal direction.
pub fn identity_prototypes(n: usize, dim: usize, gap: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    let needed = n + usize::from(gap > 0.0);
    if needed > dim {
        return Err(Error::InvalidConfig(format!(
            "cannot build {n} prototypes with gap {gap} in {dim} dims"
        )));
    }
    let mut rng = stream(seed, STREAM_APPEARANCE);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(needed);
    while basis.len() < needed {
        let mut v: Vec<f64> = (0..dim).map(|_| gauss(&mut rng)).collect();
        // Modified Gram-Schmidt, applied twice for numerical orthogonality.
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let own = (1.0 - gap).sqrt();
    let shared = gap.sqrt();
    Ok((0..n)
        .map(|i| {
            if gap > 0.0 {
                basis[i].iter().zip(&basis[n]).map(|(a, s)| own * a + shared * s).collect()
            } else {
                basis[i].clone()
            }
        })
        .collect())
}

fn noisy_embedding(proto: &[f64], sigma: f64, rng: &mut impl Rng) -> Embedding {
    let v: Vec<f64> = proto.iter().map(|&p| p + sigma * gauss(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        Embedding(v.iter().map(|x| (x / n) as f32).collect())
    } else {
        Embedding(proto.iter().map(|&x| x as f32).collect())
    }
}

fn random_direction(dim: usize, rng: &mut impl Rng) -> Embedding {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| gauss(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return Embedding(v.iter().map(|x| (x / n) as f32).collect());
        }
    }
}

/// Generates the full scene. Identical configs give identical bundles.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<ScenarioBundle> {
    cfg.validate()?;
    let paths = build_paths(cfg);
    let protos = identity_prototypes(cfg.num_agents, cfg.embedding_dim, cfg.appearance_gap, cfg.seed)?;
    let (bw, bh) = cfg.box_size;
    let (lx, ly) = (cfg.arena.0 - bw, cfg.arena.1 - bh);
    let (clo, chi) = cfg.conf_range;

    let mut det_rng = stream(cfg.seed, STREAM_DETECTION);
    let mut clutter_rng = stream(cfg.seed, STREAM_CLUTTER);
    let mut emb_rng = stream(cfg.seed, STREAM_EMBED_NOISE);
    let poisson = (cfg.fp_rate > 0.0)
        .then(|| Poisson::new(cfg.fp_rate))
        .transpose()
        .map_err(|e| Error::InvalidConfig(format!("fp_rate: {e}")))?;

    let mut gt = Vec::new();
    let mut frames = Vec::with_capacity(cfg.frames as usize);
    let mut provenance = Vec::with_capacity(cfg.frames as usize);

    for f in 1..=cfg.frames {
        let t = (f - 1) as f64;
        let mut dets: Vec<(ScoredBox, Embedding, Provenance)> = Vec::new();
        for (a, path) in paths.iter().enumerate() {
            let id = a as u64 + 1;
            let (px, py) = path.at(t);
            let gbox = BBox::new(reflect(px, lx), reflect(py, ly), bw, bh)?;
            gt.push(TrackRecord { frame: f, id, bbox: gbox, conf: 1.0 });

            // Fixed draw order per agent keeps the stream aligned whatever is dropped.
            let dropped = det_rng.random::<f64>() < cfg.drop_prob;
            let s = cfg.jitter_sigma;
            let jit = [gauss(&mut det_rng), gauss(&mut det_rng), gauss(&mut det_rng), gauss(&mut det_rng)];
            let conf = if chi > clo { det_rng.random_range(clo..chi) } else { clo };
            let emb = noisy_embedding(&protos[a], cfg.embed_noise_sigma, &mut emb_rng);
            if dropped {
                continue;
            }
            let dbox = BBox::new(
                gbox.x + s * jit[0],
                gbox.y + s * jit[1],
                (gbox.w + s * jit[2]).max(1.0),
                (gbox.h + s * jit[3]).max(1.0),
            )?;
            dets.push((ScoredBox::single_class(dbox, conf)?, emb, Provenance::Agent(id)));
        }

        if let Some(p) = &poisson {
            let count = p.sample(&mut clutter_rng) as usize;
            let mid = (clo + chi) / 2.0;
            for _ in 0..count {
                let bx =
                    BBox::new(clutter_rng.random_range(0.0..lx), clutter_rng.random_range(0.0..ly), bw, bh)?;
                let conf = if mid > clo { clutter_rng.random_range(clo..mid) } else { clo };
                let emb = random_direction(cfg.embedding_dim, &mut clutter_rng);
                dets.push((ScoredBox::single_class(bx, conf)?, emb, Provenance::FalsePositive));
            }
        }

        dets.shuffle(&mut det_rng);
        let mut boxes = Vec::with_capacity(dets.len());
        let mut embs = Vec::with_capacity(dets.len());
        let mut prov = Vec::with_capacity(dets.len());
        for (b, e, p) in dets {
            boxes.push(b);
            embs.push(e);
            prov.push(p);
        }
        frames.push(FrameInput::new(f, boxes, embs)?);
        provenance.push(prov);
    }

    Ok(ScenarioBundle { config: cfg.clone(), gt, frames, provenance })
}

/// Frame-rate reduction factor for the high-speed protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsampleRatio {
    Full,
    Half,
    Third,
}

impl SubsampleRatio {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "1" | "1.0" => Ok(SubsampleRatio::Full),
            "0.5" => Ok(SubsampleRatio::Half),
            "0.33" => Ok(SubsampleRatio::Third),
            other => Err(Error::InvalidConfig(format!("ratio '{other}' must be one of 1.0, 0.5, 0.33"))),
        }
    }

    /// Keep every k-th frame.
    pub fn step(&self) -> u32 {
        match self {
            SubsampleRatio::Full => 1,
            SubsampleRatio::Half => 2,
            SubsampleRatio::Third => 3,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SubsampleRatio::Full => "1.0",
            SubsampleRatio::Half => "0.5",
            SubsampleRatio::Third => "0.33",
        }
    }

    /// New 1-based index for a kept frame, `None` for dropped ones.
    pub fn remap(&self, frame: u32) -> Option<u32> {
        let k = self.step();
        (frame >= 1 && (frame - 1).is_multiple_of(k)).then(|| (frame - 1) / k + 1)
    }
}

/// Keeps frames 1, 1 + k, 1 + 2k, ... and renumbers them consecutively.
pub fn subsample(bundle: &ScenarioBundle, ratio: SubsampleRatio) -> ScenarioBundle {
    let (frames, gt, provenance) =
        subsample_parts(&bundle.frames, &bundle.gt, Some(&bundle.provenance), ratio);
    ScenarioBundle { config: bundle.config.clone(), gt, frames, provenance: provenance.unwrap_or_default() }
}

type Parts = (Vec<FrameInput>, Vec<TrackRecord>, Option<Vec<Vec<Provenance>>>);

pub(crate) fn subsample_parts(
    frames: &[FrameInput],
    gt: &[TrackRecord],
    provenance: Option<&[Vec<Provenance>]>,
    ratio: SubsampleRatio,
) -> Parts {
    let gt =
        gt.iter().filter_map(|r| ratio.remap(r.frame).map(|frame| TrackRecord { frame, ..*r })).collect();
    let mut kept_frames = Vec::new();
    let mut kept_prov = Vec::new();
    for (i, fi) in frames.iter().enumerate() {
        if let Some(frame) = ratio.remap(fi.frame_index) {
            kept_frames.push(FrameInput { frame_index: frame, ..fi.clone() });
            if let Some(p) = provenance {
                kept_prov.push(p[i].clone());
            }
        }
    }
    (kept_frames, gt, provenance.map(|_| kept_prov))
}

/// Tracks every frame of the bundle and scores the result at IoU 0.5.
pub fn run_and_score(bundle: &ScenarioBundle, config: &TrackerConfig) -> Result<MetricsReport> {
    let results = run_tracker(bundle, config)?;
    evaluate(&bundle.gt, &results, 0.5)
}

pub fn run_tracker(bundle: &ScenarioBundle, config: &TrackerConfig) -> Result<Vec<TrackRecord>> {
    let mut tracker = Tracker::new(config.clone())?;
    let mut out = Vec::new();
    for f in &bundle.frames {
        out.extend(tracker.step(f)?);
    }
    Ok(out)
}

//! Online multi-object tracker: a three-stage association cascade over
//! confidence-split detections with appearance-weighted first-stage scores.
//!
//! Per frame:
//!
//! 1. split detections into high (`fused >= tau_high`) and low
//!    (`tau_low <= fused < tau_high`), dropping the rest;
//! 2. predict every live track when the Kalman filter is enabled;
//! 3. stage 1 matches all live tracks to high detections with the fused score
//!    `IoU * det_score * temp_score` (or the configured alternative);
//! 4. stage 2 matches leftovers to leftover high detections by IoU;
//! 5. stage 3 matches what is still left to low detections by IoU;
//! 6. matched tracks become active, their templates blend in the detection's
//!    embedding after stages 1 and 2;
//! 7. unmatched tracks are marked lost and removed after `max_age` frames;
//! 8. unmatched high detections above `new_track_min_conf` start new tracks.

use crate::appearance::{cosine, dot, ema_update, norm, Embedding};
use crate::assignment::{linear_assignment, AssignmentResult, CostMatrix};
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox, ScoredBox};
use crate::kalman::{kf_init, kf_predict, kf_update, KalmanParams, KalmanState};
use crate::metrics::TrackRecord;

/// How stage 1 combines overlap, detection confidence and appearance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FusionMode {
    /// `iou * det_score * temp_score`
    Product,
    /// `(1 - delta) * iou + delta * temp_score`
    Linear { delta: f64 },
    /// `iou`
    IouOnly,
}

impl FusionMode {
    pub fn name(&self) -> String {
        match self {
            FusionMode::Product => "product".into(),
            FusionMode::Linear { delta } => format!("linear({delta})"),
            FusionMode::IouOnly => "iou".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub tau_high: f64,
    pub tau_low: f64,
    pub stage1_min_score: f64,
    pub stage2_min_iou: f64,
    pub stage3_min_iou: f64,
    /// EMA weight given to the new embedding.
    pub gamma: f64,
    pub max_age: u32,
    /// Consecutive matches a new track needs before it is reported. With 1 it is reported at birth.
    pub min_hits: u32,
    pub use_kalman: bool,
    pub fusion: FusionMode,
    pub new_track_min_conf: f64,
    pub kalman: KalmanParams,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            tau_high: 0.6,
            tau_low: 0.1,
            stage1_min_score: 0.1,
            stage2_min_iou: 0.5,
            stage3_min_iou: 0.5,
            gamma: 0.1,
            max_age: 30,
            min_hits: 1,
            use_kalman: true,
            fusion: FusionMode::Product,
            new_track_min_conf: 0.6,
            kalman: KalmanParams::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("tau_high", self.tau_high),
            ("tau_low", self.tau_low),
            ("stage1_min_score", self.stage1_min_score),
            ("stage2_min_iou", self.stage2_min_iou),
            ("stage3_min_iou", self.stage3_min_iou),
            ("gamma", self.gamma),
            ("new_track_min_conf", self.new_track_min_conf),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if self.min_hits == 0 {
            return Err(Error::InvalidConfig("min_hits must be at least 1".into()));
        }
        if self.tau_low >= self.tau_high {
            return Err(Error::InvalidConfig(format!(
                "tau_low ({}) must be below tau_high ({})",
                self.tau_low, self.tau_high
            )));
        }
        if let FusionMode::Linear { delta } = self.fusion {
            if !(0.0..=1.0).contains(&delta) {
                return Err(Error::InvalidConfig(format!("delta = {delta} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// `max(0, cosine)`, so the product fusion stays order-preserving.
pub fn temp_score(track_template: &Embedding, det_embedding: &Embedding) -> Result<f64> {
    Ok(cosine(track_template, det_embedding)?.max(0.0))
}

/// Stage-1 association score.
pub fn fused_score(iou_val: f64, det_conf: f64, temp: f64, mode: FusionMode) -> Result<f64> {
    match mode {
        FusionMode::Product => Ok(iou_val * det_conf * temp),
        FusionMode::Linear { delta } => {
            if !(0.0..=1.0).contains(&delta) {
                return Err(Error::InvalidConfig(format!("delta = {delta} outside [0, 1]")));
            }
            Ok((1.0 - delta) * iou_val + delta * temp)
        }
        FusionMode::IouOnly => Ok(iou_val),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    /// Born but not yet confirmed by `min_hits` matches; dropped on its first miss.
    Tentative,
    Active,
    Lost,
    Removed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    /// Last observed box.
    pub last_box: BBox,
    pub motion: Option<KalmanState>,
    /// Unit-norm appearance template.
    pub template: Embedding,
    pub status: TrackStatus,
    pub frames_since_update: u32,
    pub age: u32,
    /// Number of frames with a matched detection, birth included.
    pub hits: u32,
    /// Fused score of the last matched detection.
    pub score: f64,
}

impl Track {
    /// Box used for association: the prediction if filtering, else the last observation.
    pub fn association_box(&self) -> BBox {
        match &self.motion {
            Some(k) => k.to_bbox(),
            None => self.last_box,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameInput {
    pub frame_index: u32,
    pub detections: Vec<ScoredBox>,
    pub embeddings: Vec<Embedding>,
}

impl FrameInput {
    pub fn new(frame_index: u32, detections: Vec<ScoredBox>, embeddings: Vec<Embedding>) -> Result<Self> {
        if detections.len() != embeddings.len() {
            return Err(Error::InvalidInput(format!(
                "frame {frame_index}: {} detections but {} embeddings",
                detections.len(),
                embeddings.len()
            )));
        }
        Ok(FrameInput { frame_index, detections, embeddings })
    }
}

/// Which stage produced a match, for diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StageCounts {
    pub stage1: usize,
    pub stage2: usize,
    pub stage3: usize,
    pub born: usize,
    pub removed: usize,
}

/// Tracker state for one sequence.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<u32>,
    last_counts: StageCounts,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Tracker {
            config,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
            last_counts: StageCounts::default(),
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Active and lost tracks.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn last_counts(&self) -> &StageCounts {
        &self.last_counts
    }

    /// Processes one frame and returns the active tracks.
    pub fn step(&mut self, input: &FrameInput) -> Result<Vec<TrackRecord>> {
        if let Some(last) = self.last_frame {
            if input.frame_index <= last {
                return Err(Error::InvalidInput(format!("frame {} after frame {last}", input.frame_index)));
            }
        }
        if input.detections.len() != input.embeddings.len() {
            return Err(Error::InvalidInput(format!(
                "frame {}: {} detections but {} embeddings",
                input.frame_index,
                input.detections.len(),
                input.embeddings.len()
            )));
        }
        let cfg = self.config.clone();

        // Detection embeddings, normalised once per frame.
        let det_embs = input.embeddings.iter().map(Embedding::normalized).collect::<Result<Vec<_>>>()?;
        if let (Some(t), Some(d)) = (self.tracks.first(), det_embs.first()) {
            if t.template.dim() != d.dim() {
                return Err(Error::InvalidInput(format!(
                    "embedding dim {} != track template dim {}",
                    d.dim(),
                    t.template.dim()
                )));
            }
        }

        let mut high = Vec::new();
        let mut low = Vec::new();
        for (i, d) in input.detections.iter().enumerate() {
            if d.fused >= cfg.tau_high {
                high.push(i);
            } else if d.fused >= cfg.tau_low {
                low.push(i);
            }
        }

        if cfg.use_kalman {
            for t in &mut self.tracks {
                if let Some(k) = &t.motion {
                    t.motion = Some(kf_predict(k, &cfg.kalman));
                }
            }
        }

        let mut counts = StageCounts::default();
        let track_boxes: Vec<BBox> = self.tracks.iter().map(Track::association_box).collect();
        let all_tracks: Vec<usize> = (0..self.tracks.len()).collect();

        // Stage 1: fused appearance score against high detections.
        let m1 = self.stage_one(&all_tracks, &high, &track_boxes, input, &det_embs)?;
        let (tracks_left, high_left) = leftovers(&all_tracks, &high, &m1);
        counts.stage1 = m1.len();

        // Stage 2: plain IoU against remaining high detections.
        let m2 = iou_stage(&tracks_left, &high_left, &track_boxes, input, cfg.stage2_min_iou);
        let (tracks_left, high_left) = leftovers(&tracks_left, &high_left, &m2);
        counts.stage2 = m2.len();

        // Stage 3: plain IoU against low detections.
        let m3 = iou_stage(&tracks_left, &low, &track_boxes, input, cfg.stage3_min_iou);
        let (tracks_left, _) = leftovers(&tracks_left, &low, &m3);
        counts.stage3 = m3.len();

        for &(ti, di) in m1.iter().chain(&m2) {
            self.apply_match(ti, di, input, Some(&det_embs[di]))?;
        }
        for &(ti, di) in &m3 {
            self.apply_match(ti, di, input, None)?;
        }

        for &ti in &tracks_left {
            let t = &mut self.tracks[ti];
            let tentative = t.status == TrackStatus::Tentative;
            t.status = TrackStatus::Lost;
            t.frames_since_update += 1;
            t.age += 1;
            if tentative || t.frames_since_update > cfg.max_age {
                t.status = TrackStatus::Removed;
                counts.removed += 1;
            }
        }
        self.tracks.retain(|t| t.status != TrackStatus::Removed);

        for &di in &high_left {
            let det = &input.detections[di];
            if det.fused < cfg.new_track_min_conf {
                continue;
            }
            let id = self.next_id;
            self.next_id += 1;
            self.tracks.push(Track {
                id,
                last_box: det.bbox,
                motion: cfg.use_kalman.then(|| kf_init(&det.bbox, &cfg.kalman)),
                template: det_embs[di].clone(),
                status: if cfg.min_hits <= 1 { TrackStatus::Active } else { TrackStatus::Tentative },
                frames_since_update: 0,
                age: 1,
                hits: 1,
                score: det.fused,
            });
            counts.born += 1;
        }

        self.last_frame = Some(input.frame_index);
        self.last_counts = counts;

        Ok(self
            .tracks
            .iter()
            .filter(|t| t.status == TrackStatus::Active)
            .map(|t| TrackRecord { frame: input.frame_index, id: t.id, bbox: t.last_box, conf: t.score })
            .collect())
    }

    fn stage_one(
        &self,
        tracks: &[usize],
        dets: &[usize],
        track_boxes: &[BBox],
        input: &FrameInput,
        det_embs: &[Embedding],
    ) -> Result<Vec<(usize, usize)>> {
        let cfg = &self.config;
        let needs_appearance = !matches!(cfg.fusion, FusionMode::IouOnly);
        let det_norms: Vec<f64> =
            if needs_appearance { det_embs.iter().map(|e| norm(&e.0)).collect() } else { Vec::new() };
        let mut cost = CostMatrix::filled(tracks.len(), dets.len(), f64::INFINITY);
        for (r, &ti) in tracks.iter().enumerate() {
            let template = &self.tracks[ti].template;
            let t_norm = if needs_appearance { norm(&template.0) } else { 1.0 };
            // Same value as `temp_score`, with the norms hoisted out of the loop.
            let temp =
                |di: usize| (dot(&template.0, &det_embs[di].0) / (t_norm * det_norms[di])).clamp(0.0, 1.0);
            for (c, &di) in dets.iter().enumerate() {
                let det = &input.detections[di];
                let ov = iou(&track_boxes[ti], &det.bbox);
                let score = match cfg.fusion {
                    // A product can only pass the gate if overlap times confidence does.
                    FusionMode::Product => {
                        if ov == 0.0 || ov * det.fused < cfg.stage1_min_score {
                            continue;
                        }
                        fused_score(ov, det.fused, temp(di), cfg.fusion)?
                    }
                    FusionMode::Linear { .. } => fused_score(ov, det.fused, temp(di), cfg.fusion)?,
                    FusionMode::IouOnly => ov,
                };
                cost.set(r, c, 1.0 - score);
            }
        }
        Ok(map_back(&linear_assignment(&cost, 1.0 - cfg.stage1_min_score), tracks, dets))
    }

    fn apply_match(
        &mut self,
        ti: usize,
        di: usize,
        input: &FrameInput,
        emb: Option<&Embedding>,
    ) -> Result<()> {
        let cfg = &self.config;
        let det = &input.detections[di];
        let t = &mut self.tracks[ti];
        if let Some(k) = &t.motion {
            t.motion = Some(kf_update(k, &det.bbox, &cfg.kalman)?);
        }
        t.last_box = det.bbox;
        t.hits += 1;
        if t.status != TrackStatus::Tentative || t.hits >= cfg.min_hits {
            t.status = TrackStatus::Active;
        }
        t.frames_since_update = 0;
        t.age += 1;
        t.score = det.fused;
        if let Some(e) = emb {
            match ema_update(&t.template, e, cfg.gamma) {
                Ok(updated) => t.template = updated,
                Err(Error::DegenerateUpdate) => {}
                Err(other) => return Err(other),
            }
        }
        Ok(())
    }
}

fn iou_stage(
    tracks: &[usize],
    dets: &[usize],
    track_boxes: &[BBox],
    input: &FrameInput,
    min_iou: f64,
) -> Vec<(usize, usize)> {
    let mut cost = CostMatrix::filled(tracks.len(), dets.len(), f64::INFINITY);
    for (r, &ti) in tracks.iter().enumerate() {
        for (c, &di) in dets.iter().enumerate() {
            let ov = iou(&track_boxes[ti], &input.detections[di].bbox);
            if ov > 0.0 {
                cost.set(r, c, 1.0 - ov);
            }
        }
    }
    map_back(&linear_assignment(&cost, 1.0 - min_iou), tracks, dets)
}

fn map_back(res: &AssignmentResult, tracks: &[usize], dets: &[usize]) -> Vec<(usize, usize)> {
    res.matches.iter().map(|&(r, c)| (tracks[r], dets[c])).collect()
}

fn leftovers(tracks: &[usize], dets: &[usize], matches: &[(usize, usize)]) -> (Vec<usize>, Vec<usize>) {
    let t = tracks.iter().copied().filter(|ti| !matches.iter().any(|m| m.0 == *ti)).collect();
    let d = dets.iter().copied().filter(|di| !matches.iter().any(|m| m.1 == *di)).collect();
    (t, d)
}

//! Flat `key=value` run configuration covering the tracker, the metric
//! threshold and the synthetic scenario. The same key names are accepted as
//! command-line overrides.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::parse_key_values;
use crate::sim::{MotionKind, ScenarioConfig};
use crate::tracker::{FusionMode, TrackerConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub tracker: TrackerConfig,
    pub iou_threshold: f64,
    pub scenario: ScenarioConfig,
    /// Frames per second written to `seqinfo.txt` by `simulate`.
    pub fps: f64,
    /// Weight used whenever `fusion` is `linear`, whichever key comes first.
    pub delta: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tracker: TrackerConfig::default(),
            iou_threshold: 0.5,
            scenario: ScenarioConfig::default(),
            fps: 30.0,
            delta: 0.5,
        }
    }
}

/// Every recognised key, in the order `render` writes them.
pub const KEYS: &[&str] = &[
    "tau_high",
    "tau_low",
    "stage1_min_score",
    "stage2_min_iou",
    "stage3_min_iou",
    "gamma",
    "max_age",
    "min_hits",
    "use_kalman",
    "fusion",
    "delta",
    "new_track_min_conf",
    "kalman_std_position",
    "kalman_std_velocity",
    "iou_threshold",
    "num_agents",
    "frames",
    "arena_width",
    "arena_height",
    "motion",
    "box_width",
    "box_height",
    "speed_scale",
    "embedding_dim",
    "appearance_gap",
    "embed_noise_sigma",
    "jitter_sigma",
    "drop_prob",
    "fp_rate",
    "conf_min",
    "conf_max",
    "seed",
    "fps",
];

fn float(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| !x.is_nan())
        .ok_or_else(|| Error::InvalidConfig(format!("{key}: '{v}' is not a number")))
}

fn int<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>().map_err(|_| Error::InvalidConfig(format!("{key}: '{v}' is not a non-negative integer")))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("{key}: '{v}' is not a boolean"))),
    }
}

/// Parses `product`, `iou`, `linear` or `linear:<delta>`.
pub fn parse_fusion(v: &str, default_delta: f64) -> Result<FusionMode> {
    match v {
        "product" => Ok(FusionMode::Product),
        "iou" | "iou_only" => Ok(FusionMode::IouOnly),
        "linear" => Ok(FusionMode::Linear { delta: default_delta }),
        _ => match v.strip_prefix("linear:") {
            Some(d) => Ok(FusionMode::Linear { delta: float("fusion", d)? }),
            None => Err(Error::InvalidConfig(format!(
                "fusion '{v}' must be product, linear, linear:<delta> or iou"
            ))),
        },
    }
}

impl RunConfig {
    /// Applies one `key=value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.tracker;
        let s = &mut self.scenario;
        match key {
            "tau_high" => t.tau_high = float(key, value)?,
            "tau_low" => t.tau_low = float(key, value)?,
            "stage1_min_score" => t.stage1_min_score = float(key, value)?,
            "stage2_min_iou" => t.stage2_min_iou = float(key, value)?,
            "stage3_min_iou" => t.stage3_min_iou = float(key, value)?,
            "gamma" => t.gamma = float(key, value)?,
            "max_age" => t.max_age = int(key, value)?,
            "min_hits" => t.min_hits = int(key, value)?,
            "use_kalman" => t.use_kalman = boolean(key, value)?,
            "fusion" => {
                t.fusion = parse_fusion(value, self.delta)?;
                if let FusionMode::Linear { delta } = t.fusion {
                    self.delta = delta;
                }
            }
            "delta" => {
                self.delta = float(key, value)?;
                if let FusionMode::Linear { delta } = &mut t.fusion {
                    *delta = self.delta;
                }
            }
            "new_track_min_conf" => t.new_track_min_conf = float(key, value)?,
            "kalman_std_position" => t.kalman.std_weight_position = float(key, value)?,
            "kalman_std_velocity" => t.kalman.std_weight_velocity = float(key, value)?,
            "iou_threshold" => self.iou_threshold = float(key, value)?,
            "num_agents" => s.num_agents = int(key, value)?,
            "frames" => s.frames = int(key, value)?,
            "arena_width" => s.arena.0 = float(key, value)?,
            "arena_height" => s.arena.1 = float(key, value)?,
            "motion" => s.motion = MotionKind::parse(value)?,
            "box_width" => s.box_size.0 = float(key, value)?,
            "box_height" => s.box_size.1 = float(key, value)?,
            "speed_scale" => s.speed_scale = float(key, value)?,
            "embedding_dim" => s.embedding_dim = int(key, value)?,
            "appearance_gap" => s.appearance_gap = float(key, value)?,
            "embed_noise_sigma" => s.embed_noise_sigma = float(key, value)?,
            "jitter_sigma" => s.jitter_sigma = float(key, value)?,
            "drop_prob" => s.drop_prob = float(key, value)?,
            "fp_rate" => s.fp_rate = float(key, value)?,
            "conf_min" => s.conf_range.0 = float(key, value)?,
            "conf_max" => s.conf_range.1 = float(key, value)?,
            "seed" => s.seed = int(key, value)?,
            "fps" => self.fps = float(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.tracker.validate()?;
        self.scenario.validate()?;
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::InvalidConfig(format!("delta = {} outside [0, 1]", self.delta)));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "iou_threshold = {} outside (0, 1]",
                self.iou_threshold
            )));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::InvalidConfig(format!("fps = {} must be positive", self.fps)));
        }
        let k = &self.tracker.kalman;
        if !(k.std_weight_position > 0.0 && k.std_weight_velocity > 0.0) {
            return Err(Error::InvalidConfig("kalman noise weights must be positive".into()));
        }
        Ok(())
    }

    /// Defaults overridden by every pair in `text`, then validated.
    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (key, (line, value)) in parse_key_values(text, path)? {
            cfg.set(&key, &value).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: e.to_string(),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_text(&text, path)
    }

    /// Applies overrides in order and re-validates.
    pub fn with_overrides<'a>(mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        self.validate()?;
        Ok(self)
    }

    fn value_of(&self, key: &str) -> String {
        let t = &self.tracker;
        let s = &self.scenario;
        match key {
            "tau_high" => t.tau_high.to_string(),
            "tau_low" => t.tau_low.to_string(),
            "stage1_min_score" => t.stage1_min_score.to_string(),
            "stage2_min_iou" => t.stage2_min_iou.to_string(),
            "stage3_min_iou" => t.stage3_min_iou.to_string(),
            "gamma" => t.gamma.to_string(),
            "max_age" => t.max_age.to_string(),
            "min_hits" => t.min_hits.to_string(),
            "use_kalman" => t.use_kalman.to_string(),
            "fusion" => match t.fusion {
                FusionMode::Product => "product".into(),
                FusionMode::Linear { .. } => "linear".into(),
                FusionMode::IouOnly => "iou".into(),
            },
            "delta" => self.delta.to_string(),
            "new_track_min_conf" => t.new_track_min_conf.to_string(),
            "kalman_std_position" => t.kalman.std_weight_position.to_string(),
            "kalman_std_velocity" => t.kalman.std_weight_velocity.to_string(),
            "iou_threshold" => self.iou_threshold.to_string(),
            "num_agents" => s.num_agents.to_string(),
            "frames" => s.frames.to_string(),
            "arena_width" => s.arena.0.to_string(),
            "arena_height" => s.arena.1.to_string(),
            "motion" => s.motion.name().into(),
            "box_width" => s.box_size.0.to_string(),
            "box_height" => s.box_size.1.to_string(),
            "speed_scale" => s.speed_scale.to_string(),
            "embedding_dim" => s.embedding_dim.to_string(),
            "appearance_gap" => s.appearance_gap.to_string(),
            "embed_noise_sigma" => s.embed_noise_sigma.to_string(),
            "jitter_sigma" => s.jitter_sigma.to_string(),
            "drop_prob" => s.drop_prob.to_string(),
            "fp_rate" => s.fp_rate.to_string(),
            "conf_min" => s.conf_range.0.to_string(),
            "conf_max" => s.conf_range.1.to_string(),
            "seed" => s.seed.to_string(),
            "fps" => self.fps.to_string(),
            _ => unreachable!("key list and renderer disagree on '{key}'"),
        }
    }

    /// Full config as `key=value` lines. Floats use the shortest exact form,
    /// so `from_text(render())` reproduces the config.
    pub fn render(&self) -> String {
        KEYS.iter().map(|k| format!("{k}={}\n", self.value_of(k))).collect()
    }
}

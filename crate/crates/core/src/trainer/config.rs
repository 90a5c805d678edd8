use std::fmt::Write as _;

use crate::networks::Architecture;
use crate::{Error, Result};

/// Hyperparameters for both training stages and the layer widths they fit.
///
/// Extents (`C_in`, `H`, `W`) of 0 mean "taken from the data"; training fills
/// them in so a checkpoint's snapshot records the sequence it was fit on.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// B, frames per window.
    pub batch_frames: usize,
    /// K, frames on each side of the center.
    pub radius: usize,
    /// L, positional-encoding levels.
    pub levels: usize,
    pub append_raw: bool,
    pub lambda1: f32,
    pub lambda2: f32,
    pub lambda3: f32,
    pub lr1: f32,
    pub lr2: f32,
    pub lr_decay_every: usize,
    pub lr_decay_factor: f32,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub seed: u64,
    pub c_in: usize,
    /// 0 means `C_in · B`.
    pub c_feat: usize,
    pub height: usize,
    pub width: usize,
    pub feature_width: usize,
    pub denoise_widths: Vec<usize>,
    pub denoise_kernel: usize,
    pub refine_width: usize,
    pub refine_hidden: usize,
    pub omega0: f32,
    pub bn_eps: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let arch = Architecture::default();
        Self {
            batch_frames: 5,
            radius: 2,
            levels: 30,
            append_raw: false,
            lambda1: 1.0,
            lambda2: 0.1,
            lambda3: 1.0,
            lr1: 1e-4,
            lr2: 1e-5,
            lr_decay_every: 1000,
            lr_decay_factor: 0.1,
            epochs_stage1: 2000,
            epochs_stage2: 2000,
            seed: 0,
            c_in: 0,
            c_feat: 0,
            height: 0,
            width: 0,
            feature_width: arch.feature_width,
            denoise_widths: arch.denoise_widths,
            denoise_kernel: arch.denoise_kernel,
            refine_width: arch.refine_width,
            refine_hidden: arch.refine_hidden,
            omega0: arch.omega0,
            bn_eps: arch.bn_eps,
        }
    }
}

/// Every key understood by [`TrainConfig::set`], in snapshot order.
pub const TRAIN_KEYS: &[&str] = &[
    "B",
    "K",
    "L",
    "append_raw",
    "lambda1",
    "lambda2",
    "lambda3",
    "lr1",
    "lr2",
    "lr_decay_every",
    "lr_decay_factor",
    "epochs_stage1",
    "epochs_stage2",
    "seed",
    "C_in",
    "C_feat",
    "H",
    "W",
    "feature_width",
    "denoise_widths",
    "denoise_kernel",
    "refine_width",
    "refine_hidden",
    "omega0",
    "bn_eps",
];

pub(crate) fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value for {key}: '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("bad value for {key}: '{value}'"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_value(key, v)).collect()
}

impl TrainConfig {
    /// Sets one key. Returns `Ok(false)` if the key is not a training key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "B" => self.batch_frames = parse_value(key, value)?,
            "K" => self.radius = parse_value(key, value)?,
            "L" => self.levels = parse_value(key, value)?,
            "append_raw" => self.append_raw = parse_bool(key, value)?,
            "lambda1" => self.lambda1 = parse_value(key, value)?,
            "lambda2" => self.lambda2 = parse_value(key, value)?,
            "lambda3" => self.lambda3 = parse_value(key, value)?,
            "lr1" => self.lr1 = parse_value(key, value)?,
            "lr2" => self.lr2 = parse_value(key, value)?,
            "lr_decay_every" => self.lr_decay_every = parse_value(key, value)?,
            "lr_decay_factor" => self.lr_decay_factor = parse_value(key, value)?,
            "epochs_stage1" => self.epochs_stage1 = parse_value(key, value)?,
            "epochs_stage2" => self.epochs_stage2 = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "C_in" => self.c_in = parse_value(key, value)?,
            "C_feat" => self.c_feat = parse_value(key, value)?,
            "H" => self.height = parse_value(key, value)?,
            "W" => self.width = parse_value(key, value)?,
            "feature_width" => self.feature_width = parse_value(key, value)?,
            "denoise_widths" => self.denoise_widths = parse_list(key, value)?,
            "denoise_kernel" => self.denoise_kernel = parse_value(key, value)?,
            "refine_width" => self.refine_width = parse_value(key, value)?,
            "refine_hidden" => self.refine_hidden = parse_value(key, value)?,
            "omega0" => self.omega0 = parse_value(key, value)?,
            "bn_eps" => self.bn_eps = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "B" => self.batch_frames.to_string(),
            "K" => self.radius.to_string(),
            "L" => self.levels.to_string(),
            "append_raw" => self.append_raw.to_string(),
            "lambda1" => self.lambda1.to_string(),
            "lambda2" => self.lambda2.to_string(),
            "lambda3" => self.lambda3.to_string(),
            "lr1" => self.lr1.to_string(),
            "lr2" => self.lr2.to_string(),
            "lr_decay_every" => self.lr_decay_every.to_string(),
            "lr_decay_factor" => self.lr_decay_factor.to_string(),
            "epochs_stage1" => self.epochs_stage1.to_string(),
            "epochs_stage2" => self.epochs_stage2.to_string(),
            "seed" => self.seed.to_string(),
            "C_in" => self.c_in.to_string(),
            "C_feat" => self.c_feat.to_string(),
            "H" => self.height.to_string(),
            "W" => self.width.to_string(),
            "feature_width" => self.feature_width.to_string(),
            "denoise_widths" => self
                .denoise_widths
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(","),
            "denoise_kernel" => self.denoise_kernel.to_string(),
            "refine_width" => self.refine_width.to_string(),
            "refine_hidden" => self.refine_hidden.to_string(),
            "omega0" => self.omega0.to_string(),
            "bn_eps" => self.bn_eps.to_string(),
            _ => return None,
        })
    }

    /// `key=value` lines for every training key.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in TRAIN_KEYS {
            let _ = writeln!(s, "{k}={}", self.get(k).expect("listed key"));
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_frames != 2 * self.radius + 1 {
            return bad(format!(
                "B = {} must equal 2K + 1 with K = {}",
                self.batch_frames, self.radius
            ));
        }
        if self.levels == 0 {
            return bad("L must be positive".into());
        }
        for (name, v) in [
            ("lr1", self.lr1),
            ("lr2", self.lr2),
            ("lr_decay_factor", self.lr_decay_factor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.lr_decay_every == 0 {
            return bad("lr_decay_every must be at least 1".into());
        }
        if self.c_in > 0 {
            self.architecture(self.c_in).validate()?;
        }
        Ok(())
    }

    /// Network shapes for `c_in` image channels.
    pub fn architecture(&self, c_in: usize) -> Architecture {
        let c_feat = if self.c_feat == 0 {
            c_in * self.batch_frames
        } else {
            self.c_feat
        };
        Architecture {
            c_in,
            c_feat,
            batch_frames: self.batch_frames,
            levels: self.levels,
            append_raw: self.append_raw,
            feature_width: self.feature_width,
            denoise_widths: self.denoise_widths.clone(),
            denoise_kernel: self.denoise_kernel,
            refine_width: self.refine_width,
            refine_hidden: self.refine_hidden,
            omega0: self.omega0,
            bn_eps: self.bn_eps,
        }
    }
}

/// Learning rate in effect during (0-based) `epoch`:
/// `base · factor^⌊epoch / every⌋`.
pub fn lr_at(base: f32, factor: f32, every: usize, epoch: usize) -> f32 {
    let k = (epoch / every.max(1)) as i32;
    (base as f64 * (factor as f64).powi(k)) as f32
}

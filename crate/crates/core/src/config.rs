//! Run configuration: every training and noise key plus the paths and modes
//! used by the commands, read from `key=value` files with `#` comments.
//!
//! Precedence is built-in defaults, then the config file, then overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::noise::{NoiseKind, NoiseSpec};
use crate::trainer::{parse_value, OutputStage, TrainConfig, TRAIN_KEYS};
use crate::{Error, Result};

/// File written into output directories with the resolved configuration.
pub const ECHO_FILE: &str = "resolved_config.txt";

pub const DEFAULT_PE_LEVELS: &[usize] = &[5, 10, 20, 30, 50, 100];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainStages {
    One,
    Two,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblateMode {
    /// One model per positional-encoding level.
    Pe,
    /// One model, reported after each stage.
    Stages,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub noise: NoiseSpec,
    pub input_dir: PathBuf,
    pub noisy_dir: PathBuf,
    pub clean_dir: PathBuf,
    pub denoised_dir: PathBuf,
    /// Output directory, checkpoint or report path depending on the command.
    pub out: PathBuf,
    /// Input checkpoint.
    pub checkpoint: PathBuf,
    pub train_stage: TrainStages,
    pub output_stage: OutputStage,
    pub ablate_mode: AblateMode,
    pub pe_levels: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            noise: NoiseSpec::gaussian(30.0, 0),
            input_dir: PathBuf::new(),
            noisy_dir: PathBuf::new(),
            clean_dir: PathBuf::new(),
            denoised_dir: PathBuf::new(),
            out: PathBuf::new(),
            checkpoint: PathBuf::new(),
            train_stage: TrainStages::Both,
            output_stage: OutputStage::Refined,
            ablate_mode: AblateMode::Stages,
            pe_levels: DEFAULT_PE_LEVELS.to_vec(),
        }
    }
}

const RUN_KEYS: &[&str] = &[
    "noise",
    "sigma",
    "lambda",
    "alpha",
    "noise_seed",
    "input_dir",
    "noisy_dir",
    "clean_dir",
    "denoised_dir",
    "out",
    "checkpoint",
    "train_stage",
    "output_stage",
    "ablate_mode",
    "pe_levels",
];

/// `(key, value)` pairs from `key=value` text. Blank lines and `#` comments
/// (whole-line or trailing) are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got '{raw}'", n + 1)))?;
        out.push((k.trim().to_owned(), v.trim().to_owned()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if self.train.set(key, value)? {
            return Ok(());
        }
        match key {
            "noise" => self.noise.kind = value.parse()?,
            "sigma" => self.noise.sigma = parse_value(key, value)?,
            "lambda" => self.noise.lambda = parse_value(key, value)?,
            "alpha" => self.noise.alpha = parse_value(key, value)?,
            "noise_seed" => self.noise.seed = parse_value(key, value)?,
            "input_dir" => self.input_dir = value.into(),
            "noisy_dir" => self.noisy_dir = value.into(),
            "clean_dir" => self.clean_dir = value.into(),
            "denoised_dir" => self.denoised_dir = value.into(),
            "out" => self.out = value.into(),
            "checkpoint" => self.checkpoint = value.into(),
            "train_stage" => {
                self.train_stage = match value {
                    "1" => TrainStages::One,
                    "2" => TrainStages::Two,
                    "both" => TrainStages::Both,
                    _ => {
                        return Err(Error::Config(format!(
                            "train_stage must be 1, 2 or both, got '{value}'"
                        )))
                    }
                }
            }
            "output_stage" => self.output_stage = value.parse()?,
            "ablate_mode" => {
                self.ablate_mode = match value {
                    "pe" => AblateMode::Pe,
                    "stages" => AblateMode::Stages,
                    _ => {
                        return Err(Error::Config(format!(
                            "ablate_mode must be pe or stages, got '{value}'"
                        )))
                    }
                }
            }
            "pe_levels" => {
                self.pe_levels = value
                    .split(',')
                    .map(|v| parse_value(key, v))
                    .collect::<Result<Vec<usize>>>()?
            }
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        if let Some(v) = self.train.get(key) {
            return Some(v);
        }
        let path = |p: &Path| p.display().to_string();
        Some(match key {
            "noise" => self.noise.kind.to_string(),
            "sigma" => self.noise.sigma.to_string(),
            "lambda" => self.noise.lambda.to_string(),
            "alpha" => self.noise.alpha.to_string(),
            "noise_seed" => self.noise.seed.to_string(),
            "input_dir" => path(&self.input_dir),
            "noisy_dir" => path(&self.noisy_dir),
            "clean_dir" => path(&self.clean_dir),
            "denoised_dir" => path(&self.denoised_dir),
            "out" => path(&self.out),
            "checkpoint" => path(&self.checkpoint),
            "train_stage" => match self.train_stage {
                TrainStages::One => "1",
                TrainStages::Two => "2",
                TrainStages::Both => "both",
            }
            .into(),
            "output_stage" => self.output_stage.to_string(),
            "ablate_mode" => match self.ablate_mode {
                AblateMode::Pe => "pe",
                AblateMode::Stages => "stages",
            }
            .into(),
            "pe_levels" => self
                .pe_levels
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(","),
            _ => return None,
        })
    }

    pub fn keys() -> impl Iterator<Item = &'static str> {
        TRAIN_KEYS.iter().chain(RUN_KEYS).copied()
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_pairs(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// Defaults, then `file` if given, then `overrides` in order.
    pub fn resolve<K: AsRef<str>, V: AsRef<str>>(file: Option<&Path>, overrides: &[(K, V)]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_text(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        }
        for (k, v) in overrides {
            cfg.set(k.as_ref(), v.as_ref())?;
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# resolved configuration\n");
        for k in Self::keys() {
            let _ = writeln!(s, "{k}={}", self.get(k).expect("listed key"));
        }
        s
    }

    pub fn noise_kind(&self) -> NoiseKind {
        self.noise.kind
    }

    /// Writes [`ECHO_FILE`] into `dir`.
    pub fn echo_into(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(ECHO_FILE);
        std::fs::write(&path, self.to_text()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

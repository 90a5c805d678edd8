//! Two-stage fitting of one model to one noisy sequence.
//!
//! Stage 1 fits the feature generator and denoiser jointly. Stage 2 freezes
//! both and fits the SIREN refiner against the noisy center frame and the
//! stage-1 output. An epoch is one pass over every center frame in ascending
//! order with one optimizer step per frame.

mod checkpoint;
mod config;

use std::fmt;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Stage, FORMAT_VERSION, MAGIC};
pub(crate) use config::parse_value;
pub use config::{lr_at, TrainConfig, TRAIN_KEYS};

use crate::frames::FrameSequence;
use crate::grid::{encode, make_grid, CoordGrid};
use crate::networks::{
    central_channels, denoise_forward, feature_forward, init_params, refine_forward, Architecture, ModelParams,
};
use crate::tensor::{AdamConfig, AdamState, Graph, ParamSet, Tensor, Var};
use crate::{Error, Result};

/// Window of frames around a center index.
#[derive(Debug, Clone)]
pub struct Batch {
    /// Frame indices after reflection at the sequence ends.
    pub indices: Vec<usize>,
    pub grids: Vec<CoordGrid>,
    pub noisy: Vec<Tensor>,
    /// The noisy center frame.
    pub center: Tensor,
}

/// Reflects `i` into `[0, n)`: `-1 → 1`, `n → n − 2`.
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Indices `t−K ..= t+K`, reflected at the ends.
pub fn window_indices(t: usize, radius: usize, n: usize) -> Vec<usize> {
    (0..=2 * radius)
        .map(|j| reflect_index(t as isize + j as isize - radius as isize, n))
        .collect()
}

pub fn build_batch(seq: &FrameSequence, t: usize, radius: usize) -> Result<Batch> {
    let n = seq.len();
    if n == 0 {
        return Err(Error::Contract("empty sequence".into()));
    }
    if t >= n {
        return Err(Error::Index(format!("center {t} outside sequence of {n} frames")));
    }
    let indices = window_indices(t, radius, n);
    let (h, w) = (seq.height(), seq.width());
    let grids = indices
        .iter()
        .map(|&i| make_grid(h, w, i, n))
        .collect::<Result<Vec<_>>>()?;
    let noisy = indices.iter().map(|&i| seq.frame(i).clone()).collect();
    Ok(Batch {
        indices,
        grids,
        noisy,
        center: seq.frame(t).clone(),
    })
}

/// `mean|Î_B − I^c| + λ1 · mean|F^c − I|`, where the second term runs over
/// the stacked central feature channels `[B, C, H, W]` and the stacked noisy
/// window, i.e. the average of the per-frame means.
pub fn stage1_loss(
    g: &mut Graph,
    denoised: Var,
    center: Var,
    central_features: Var,
    noisy: Var,
    lambda1: f32,
) -> Result<Var> {
    let fid = g.l1_loss(denoised, center)?;
    let feat = g.l1_loss(central_features, noisy)?;
    let feat = g.scale(feat, lambda1)?;
    Ok(g.add(fid, feat)?)
}

/// `λ2 · mean|Î_R − I^c| + λ3 · mean|Î_R − Î_B|`.
pub fn stage2_loss(
    g: &mut Graph,
    refined: Var,
    center: Var,
    stage1_out: Var,
    lambda2: f32,
    lambda3: f32,
) -> Result<Var> {
    let a = g.l1_loss(refined, center)?;
    let a = g.scale(a, lambda2)?;
    let b = g.l1_loss(refined, stage1_out)?;
    let b = g.scale(b, lambda3)?;
    Ok(g.add(a, b)?)
}

/// Mean loss of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub stage: u8,
    /// 0-based.
    pub epoch: usize,
    pub loss: f64,
    pub lr: f32,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} stage={} loss={} lr={}",
            self.epoch, self.stage, self.loss, self.lr
        )
    }
}

impl EpochLog {
    /// Parses a line written by `Display`.
    pub fn parse(line: &str) -> Option<Self> {
        let mut it = line.split_whitespace();
        let mut field = |key: &str| it.next()?.strip_prefix(key)?.strip_prefix('=').map(str::to_owned);
        Some(Self {
            epoch: field("epoch")?.parse().ok()?,
            stage: field("stage")?.parse().ok()?,
            loss: field("loss")?.parse().ok()?,
            lr: field("lr")?.parse().ok()?,
        })
    }
}

fn check_sequence(seq: &FrameSequence, cfg: &TrainConfig) -> Result<()> {
    let mismatch = |what: &str, want: usize, got: usize| {
        Err(Error::Contract(format!(
            "configured {what} = {want} but the sequence has {got}"
        )))
    };
    if cfg.c_in != 0 && cfg.c_in != seq.channels() {
        return mismatch("C_in", cfg.c_in, seq.channels());
    }
    if cfg.height != 0 && cfg.height != seq.height() {
        return mismatch("H", cfg.height, seq.height());
    }
    if cfg.width != 0 && cfg.width != seq.width() {
        return mismatch("W", cfg.width, seq.width());
    }
    Ok(())
}

/// The config with extents taken from `seq`.
fn resolved(seq: &FrameSequence, cfg: &TrainConfig) -> Result<(TrainConfig, Architecture)> {
    cfg.validate()?;
    check_sequence(seq, cfg)?;
    let mut cfg = cfg.clone();
    cfg.c_in = seq.channels();
    cfg.height = seq.height();
    cfg.width = seq.width();
    let arch = cfg.architecture(cfg.c_in);
    arch.validate()?;
    cfg.c_feat = arch.c_feat;
    Ok((cfg, arch))
}

/// Channels-first encodings `[D, H, W]` for every frame index.
fn encode_all(seq: &FrameSequence, arch: &Architecture) -> Result<Vec<Tensor>> {
    (0..seq.len())
        .map(|i| {
            let grid = make_grid(seq.height(), seq.width(), i, seq.len())?;
            Ok(encode(&grid, arch.levels, arch.append_raw)?.channels_first())
        })
        .collect()
}

fn stack(parts: &[&Tensor]) -> Result<Tensor> {
    Ok(Tensor::stack(parts)?)
}

fn batched(t: &Tensor) -> Result<Tensor> {
    let mut shape = vec![1];
    shape.extend_from_slice(t.shape());
    Ok(t.clone().reshape(shape)?)
}

fn joint(params: &mut ModelParams) -> ParamSet {
    let f = std::mem::take(&mut params.feature);
    let d = std::mem::take(&mut params.denoise);
    f.into_iter().chain(d).collect()
}

fn split_joint(params: &mut ModelParams, joint: ParamSet) {
    let (f, d): (Vec<_>, Vec<_>) = joint.into_iter().partition(|(n, _)| n.starts_with("feature."));
    params.feature = f.into_iter().collect();
    params.denoise = d.into_iter().collect();
}

fn adam(lr: f32) -> AdamConfig {
    AdamConfig {
        lr,
        ..AdamConfig::default()
    }
}

fn non_finite(stage: u8, epoch: usize) -> Error {
    Error::NonFiniteLoss {
        stage,
        epoch,
        last_good: epoch.checked_sub(1),
    }
}

pub fn train_stage1(seq: &FrameSequence, cfg: &TrainConfig) -> Result<Checkpoint> {
    train_stage1_with(seq, cfg, |_| {})
}

/// Stage 1 from a fresh initialization, reporting every epoch to `on_epoch`.
pub fn train_stage1_with(
    seq: &FrameSequence,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Checkpoint> {
    let (cfg, arch) = resolved(seq, cfg)?;
    let mut params = init_params(&arch, cfg.seed)?;
    let encoded = encode_all(seq, &arch)?;
    let mut theta_phi = joint(&mut params);
    let mut opt = AdamState::new(&theta_phi, adam(cfg.lr1));
    let n = seq.len();

    for epoch in 0..cfg.epochs_stage1 {
        let lr = lr_at(cfg.lr1, cfg.lr_decay_factor, cfg.lr_decay_every, epoch);
        opt.set_lr(lr);
        let mut total = 0.0f64;
        for t in 0..n {
            let idx = window_indices(t, cfg.radius, n);
            let x = stack(&idx.iter().map(|&i| &encoded[i]).collect::<Vec<_>>())?;
            let noisy = stack(&idx.iter().map(|&i| seq.frame(i)).collect::<Vec<_>>())?;

            let mut g = Graph::new();
            let bound = theta_phi.bind(&mut g, true);
            let x = g.constant(x);
            let features = feature_forward(&mut g, &arch, &bound, x)?;
            let out = denoise_forward(&mut g, &arch, &bound, features)?;
            let fc = central_channels(&mut g, &arch, features)?;
            let noisy = g.constant(noisy);
            let center = g.constant(batched(seq.frame(t))?);
            let loss = stage1_loss(&mut g, out, center, fc, noisy, cfg.lambda1)?;
            let value = g.scalar(loss);
            if !value.is_finite() {
                return Err(non_finite(1, epoch));
            }
            g.backward(loss)?;
            theta_phi.accumulate_grads(&g, &bound)?;
            opt.step(&mut theta_phi)?;
            total += value as f64;
        }
        on_epoch(&EpochLog {
            stage: 1,
            epoch,
            loss: total / n as f64,
            lr,
        });
    }

    theta_phi.clear_grads();
    split_joint(&mut params, theta_phi);
    Ok(Checkpoint {
        config: cfg,
        stage: Stage::AfterStage1,
        params,
        adam_stage1: opt,
        adam_stage2: None,
    })
}

pub fn train_stage2(seq: &FrameSequence, ckpt: &Checkpoint, cfg: &TrainConfig) -> Result<Checkpoint> {
    train_stage2_with(seq, ckpt, cfg, |_| {})
}

/// Stage 2 on top of an `after_stage1` checkpoint. Only the refiner is
/// updated; stage-2 settings (`lr2`, `λ2`, `λ3`, epochs, decay) come from
/// `cfg`, network shapes from the checkpoint.
pub fn train_stage2_with(
    seq: &FrameSequence,
    ckpt: &Checkpoint,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Checkpoint> {
    if ckpt.stage != Stage::AfterStage1 {
        return Err(Error::Contract(format!(
            "stage 2 needs an {} checkpoint, got {}",
            Stage::AfterStage1,
            ckpt.stage
        )));
    }
    cfg.validate()?;
    check_sequence(seq, &ckpt.config)?;
    let arch = &ckpt.params.arch;
    let n = seq.len();
    let (h, w) = (seq.height(), seq.width());

    let stage1_out = stage1_outputs(&ckpt.params, seq)?;
    let coords = (0..n)
        .map(|t| Ok(make_grid(h, w, t, n)?.as_rows()))
        .collect::<Result<Vec<_>>>()?;

    let mut eta = ckpt.params.refine.clone();
    let mut opt = AdamState::new(&eta, adam(cfg.lr2));
    for epoch in 0..cfg.epochs_stage2 {
        let lr = lr_at(cfg.lr2, cfg.lr_decay_factor, cfg.lr_decay_every, epoch);
        opt.set_lr(lr);
        let mut total = 0.0f64;
        for t in 0..n {
            let mut g = Graph::new();
            let bound = eta.bind(&mut g, true);
            let x = g.constant(coords[t].clone());
            let refined = refine_forward(&mut g, arch, &bound, x, h, w)?;
            let center = g.constant(batched(seq.frame(t))?);
            let target = g.constant(stage1_out[t].clone());
            let loss = stage2_loss(&mut g, refined, center, target, cfg.lambda2, cfg.lambda3)?;
            let value = g.scalar(loss);
            if !value.is_finite() {
                return Err(non_finite(2, epoch));
            }
            g.backward(loss)?;
            eta.accumulate_grads(&g, &bound)?;
            opt.step(&mut eta)?;
            total += value as f64;
        }
        on_epoch(&EpochLog {
            stage: 2,
            epoch,
            loss: total / n as f64,
            lr,
        });
    }

    let mut config = ckpt.config.clone();
    config.lr2 = cfg.lr2;
    config.lambda2 = cfg.lambda2;
    config.lambda3 = cfg.lambda3;
    config.epochs_stage2 = cfg.epochs_stage2;
    eta.clear_grads();
    let mut params = ckpt.params.clone();
    params.refine = eta;
    Ok(Checkpoint {
        config,
        stage: Stage::AfterStage2,
        params,
        adam_stage1: ckpt.adam_stage1.clone(),
        adam_stage2: Some(opt),
    })
}

/// Stage-1 output `[1, C, H, W]` for every center frame.
fn stage1_outputs(params: &ModelParams, seq: &FrameSequence) -> Result<Vec<Tensor>> {
    let arch = &params.arch;
    let encoded = encode_all(seq, arch)?;
    let radius = arch.batch_frames / 2;
    (0..seq.len())
        .map(|t| {
            let idx = window_indices(t, radius, seq.len());
            let x = stack(&idx.iter().map(|&i| &encoded[i]).collect::<Vec<_>>())?;
            params.denoise(&x)
        })
        .collect()
}

/// Which network's output to emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputStage {
    /// Î_B, the denoiser output.
    Denoiser,
    /// Î_R, the refiner output clipped to `[0, 1]`.
    Refined,
}

impl fmt::Display for OutputStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputStage::Denoiser => "denoiser",
            OutputStage::Refined => "refined",
        })
    }
}

impl std::str::FromStr for OutputStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "denoiser" => Ok(OutputStage::Denoiser),
            "refined" => Ok(OutputStage::Refined),
            other => Err(Error::Config(format!(
                "unknown output stage '{other}' (expected denoiser or refined)"
            ))),
        }
    }
}

/// Denoises every frame of `seq`. The result carries `seq`'s clean frames.
pub fn denoise_sequence(ckpt: &Checkpoint, seq: &FrameSequence, stage: OutputStage) -> Result<FrameSequence> {
    if stage == OutputStage::Refined && ckpt.stage != Stage::AfterStage2 {
        return Err(Error::Contract(format!(
            "refined output needs an {} checkpoint, got {}",
            Stage::AfterStage2,
            ckpt.stage
        )));
    }
    check_sequence(seq, &ckpt.config)?;
    let (c, h, w) = (seq.channels(), seq.height(), seq.width());
    let n = seq.len();
    let frames = match stage {
        OutputStage::Denoiser => stage1_outputs(&ckpt.params, seq)?
            .into_iter()
            .map(|t| Ok(t.reshape([c, h, w])?))
            .collect::<Result<Vec<_>>>()?,
        OutputStage::Refined => (0..n)
            .map(|t| {
                let out = ckpt.params.refine(&make_grid(h, w, t, n)?)?;
                let data = out.data().iter().map(|v| v.clamp(0.0, 1.0)).collect();
                Ok(Tensor::new([c, h, w], data)?)
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let out = FrameSequence::new(frames)?;
    match seq.clean() {
        Some(clean) => out.with_clean(clean.to_vec()),
        None => Ok(out),
    }
}

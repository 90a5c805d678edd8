//! The five pipeline commands. Each reads its inputs from a resolved
//! [`RunConfig`], writes its artifacts and echoes the config next to them.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::{AblateMode, RunConfig, TrainStages};
use crate::frames::{load_dir, save_dir, FrameSequence};
use crate::metrics::{report, MetricsReport, ReportTable};
use crate::noise::{freeze_dataset, Manifest};
use crate::trainer::{
    denoise_sequence, load_checkpoint, save_checkpoint, train_stage1_with, train_stage2_with, Checkpoint, EpochLog,
    OutputStage, TrainConfig,
};
use crate::{Error, Result};

/// Per-epoch log file written next to a trained checkpoint.
pub const LOSS_LOG_FILE: &str = "loss_log.txt";

fn require<'a>(p: &'a Path, key: &str) -> Result<&'a Path> {
    if p.as_os_str().is_empty() {
        return Err(Error::Config(format!("{key} is required")));
    }
    Ok(p)
}

fn parent_dir(p: &Path) -> PathBuf {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Corrupts the clean frames in `input_dir` once and writes the frozen noisy
/// dataset plus manifest to `out`.
pub fn cmd_corrupt(cfg: &RunConfig) -> Result<Manifest> {
    let input = require(&cfg.input_dir, "input_dir")?;
    let out = require(&cfg.out, "out")?;
    cfg.noise.validate()?;
    let clean = load_dir(input)?;
    let (manifest, _) = freeze_dataset(&clean, &cfg.noise, out)?;
    cfg.echo_into(out)?;
    Ok(manifest)
}

/// Loads a noisy frame directory, with clean frames when a clean directory is
/// given.
pub fn load_sequence(noisy: &Path, clean: Option<&Path>) -> Result<FrameSequence> {
    let seq = load_dir(noisy)?;
    match clean {
        Some(dir) if !dir.as_os_str().is_empty() => {
            let c = load_dir(dir)?;
            if c.len() != seq.len() {
                return Err(Error::Contract(format!(
                    "{} noisy frames but {} clean frames",
                    seq.len(),
                    c.len()
                )));
            }
            seq.with_clean(c.into_frames())
        }
        _ => Ok(seq),
    }
}

/// Trains the stages selected by `train_stage` on `noisy_dir` and writes the
/// final checkpoint to `out`. With `both`, the stage-1 checkpoint is also
/// kept as `<out>.stage1`. Every epoch is written to `log` and to
/// [`LOSS_LOG_FILE`] beside the checkpoint.
pub fn cmd_train(cfg: &RunConfig, log: &mut dyn Write) -> Result<Checkpoint> {
    let noisy_dir = require(&cfg.noisy_dir, "noisy_dir")?;
    let out = require(&cfg.out, "out")?;
    if cfg.train_stage == TrainStages::Two && cfg.checkpoint.as_os_str().is_empty() {
        return Err(Error::Config("stage 2 alone needs a stage-1 checkpoint".into()));
    }
    cfg.train.validate()?;
    let seq = load_dir(noisy_dir)?;
    let dir = parent_dir(out);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let log_path = dir.join(LOSS_LOG_FILE);
    let mut lines = String::new();
    let mut io_err = None;
    let mut emit = |e: &EpochLog| {
        let line = e.to_string();
        if let Err(err) = writeln!(log, "{line}") {
            io_err.get_or_insert(err);
        }
        lines.push_str(&line);
        lines.push('\n');
    };

    let result = (|| {
        let stage1 = match cfg.train_stage {
            TrainStages::Two => load_checkpoint(&cfg.checkpoint)?,
            _ => train_stage1_with(&seq, &cfg.train, &mut emit)?,
        };
        match cfg.train_stage {
            TrainStages::One => Ok(stage1),
            TrainStages::Two => train_stage2_with(&seq, &stage1, &cfg.train, &mut emit),
            TrainStages::Both => {
                let mut side = out.as_os_str().to_owned();
                side.push(".stage1");
                save_checkpoint(&stage1, Path::new(&side))?;
                train_stage2_with(&seq, &stage1, &cfg.train, &mut emit)
            }
        }
    })();
    std::fs::write(&log_path, &lines).map_err(|e| Error::io(&log_path, e))?;
    if let Some(e) = io_err {
        return Err(Error::io("<log>", e));
    }
    let ckpt = result?;
    save_checkpoint(&ckpt, out)?;
    cfg.echo_into(&dir)?;
    Ok(ckpt)
}

/// Denoises `noisy_dir` with `checkpoint` and writes 8-bit frames to `out`.
/// Returns the in-memory output before quantization.
pub fn cmd_denoise(cfg: &RunConfig) -> Result<FrameSequence> {
    let ckpt = load_checkpoint(require(&cfg.checkpoint, "checkpoint")?)?;
    let seq = load_dir(require(&cfg.noisy_dir, "noisy_dir")?)?;
    let out = require(&cfg.out, "out")?;
    let result = denoise_sequence(&ckpt, &seq, cfg.output_stage)?;
    save_dir(&result, out)?;
    cfg.echo_into(out)?;
    Ok(result)
}

fn noise_label(cfg: &RunConfig, noisy_dir: &Path) -> (String, f64) {
    match Manifest::load(noisy_dir) {
        Ok(m) => (m.kind.to_string(), m.param),
        Err(_) => (cfg.noise.kind.to_string(), cfg.noise.param()),
    }
}

/// Scores `denoised_dir` against `clean_dir`; writes one row per frame and a
/// `mean` row to the report at `out`.
pub fn cmd_eval(cfg: &RunConfig) -> Result<MetricsReport> {
    let denoised = load_dir(require(&cfg.denoised_dir, "denoised_dir")?)?;
    let clean = load_dir(require(&cfg.clean_dir, "clean_dir")?)?;
    let out = require(&cfg.out, "out")?;
    let (kind, param) = if cfg.noisy_dir.as_os_str().is_empty() {
        (cfg.noise.kind.to_string(), cfg.noise.param())
    } else {
        noise_label(cfg, &cfg.noisy_dir)
    };
    let r = MetricsReport::evaluate("denoised", kind, param, denoised.frames(), clean.frames())?;
    report(r.per_frame_rows())?.write(out)?;
    cfg.echo_into(&parent_dir(out))?;
    Ok(r)
}

fn final_output(ckpt: &Checkpoint) -> OutputStage {
    match ckpt.stage {
        crate::trainer::Stage::AfterStage2 => OutputStage::Refined,
        crate::trainer::Stage::AfterStage1 => OutputStage::Denoiser,
    }
}

fn fit(seq: &FrameSequence, train: &TrainConfig, log: &mut dyn FnMut(&EpochLog)) -> Result<Checkpoint> {
    let s1 = train_stage1_with(seq, train, &mut *log)?;
    if train.epochs_stage2 == 0 {
        return Ok(s1);
    }
    train_stage2_with(seq, &s1, train, &mut *log)
}

/// `pe`: one model per level in `pe_levels`, one row `L=<level>` each, scored
/// on the final output. `stages`: one model, rows `F+D` and `F+D+R`.
pub fn cmd_ablate(cfg: &RunConfig, log: &mut dyn Write) -> Result<(ReportTable, Vec<MetricsReport>)> {
    let noisy_dir = require(&cfg.noisy_dir, "noisy_dir")?;
    let seq = load_sequence(noisy_dir, Some(require(&cfg.clean_dir, "clean_dir")?))?;
    let out = require(&cfg.out, "out")?;
    let clean = seq.clean().expect("loaded with clean frames");
    let (kind, param) = noise_label(cfg, noisy_dir);
    let mut emit = |e: &EpochLog| {
        let _ = writeln!(log, "{e}");
    };

    let mut reports = Vec::new();
    match cfg.ablate_mode {
        AblateMode::Pe => {
            if cfg.pe_levels.is_empty() {
                return Err(Error::Config("pe_levels is empty".into()));
            }
            for &levels in &cfg.pe_levels {
                let train = TrainConfig {
                    levels,
                    ..cfg.train.clone()
                };
                let ckpt = fit(&seq, &train, &mut emit)?;
                let result = denoise_sequence(&ckpt, &seq, final_output(&ckpt))?;
                let mut r = MetricsReport::evaluate(format!("L={levels}"), &kind, param, result.frames(), clean)?;
                r.levels = Some(levels);
                reports.push(r);
            }
        }
        AblateMode::Stages => {
            let train = cfg.train.clone();
            if train.epochs_stage2 == 0 {
                return Err(Error::Config("stages ablation needs epochs_stage2 > 0".into()));
            }
            let ckpt = fit(&seq, &train, &mut emit)?;
            for (name, stage) in [("F+D", OutputStage::Denoiser), ("F+D+R", OutputStage::Refined)] {
                let result = denoise_sequence(&ckpt, &seq, stage)?;
                let mut r = MetricsReport::evaluate(name, &kind, param, result.frames(), clean)?;
                r.levels = Some(train.levels);
                reports.push(r);
            }
        }
    }
    let table = report(reports.iter().map(MetricsReport::summary_row).collect())?;
    table.write(out)?;
    cfg.echo_into(&parent_dir(out))?;
    Ok((table, reports))
}

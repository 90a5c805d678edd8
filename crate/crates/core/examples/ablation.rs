//! Runs both ablations on a small synthetic clip: positional-encoding levels
//! and denoiser-only versus refined output. Epoch counts are kept short.
//!
//! ```text
//! cargo run --release --example ablation -- [epochs]
//! ```

use cbvd::cli::cmd_ablate;
use cbvd::config::{AblateMode, RunConfig};
use cbvd::frames::{moving_pattern, save_dir};
use cbvd::noise::{freeze_dataset, NoiseSpec};

fn main() -> cbvd::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(60);
    let root = std::env::temp_dir().join("cbvd_ablation_example");
    let clean = moving_pattern(6, 24, 24, 3)?.quantized();
    save_dir(&clean, &root.join("clean"))?;
    freeze_dataset(&clean, &NoiseSpec::poisson(30.0, 4), &root.join("noisy"))?;

    let mut cfg = RunConfig {
        noisy_dir: root.join("noisy"),
        clean_dir: root.join("clean"),
        ..RunConfig::default()
    };
    cfg.train.feature_width = 16;
    cfg.train.refine_width = 64;
    cfg.train.epochs_stage1 = epochs;
    cfg.train.epochs_stage2 = epochs;
    cfg.train.lr1 = 1e-3;
    cfg.train.lr2 = 1e-4;

    cfg.ablate_mode = AblateMode::Pe;
    cfg.pe_levels = vec![5, 10, 30];
    cfg.out = root.join("pe_report.csv");
    let (table, _) = cmd_ablate(&cfg, &mut std::io::sink())?;
    println!("{}", table.to_text());

    cfg.ablate_mode = AblateMode::Stages;
    cfg.out = root.join("stages_report.csv");
    let (table, _) = cmd_ablate(&cfg, &mut std::io::sink())?;
    println!("{}", table.to_text());
    println!("reports in {}", root.display());
    Ok(())
}

//! Fits both stages to a noisy copy of the synthetic clip and prints PSNR/SSIM
//! of the noisy input, the denoiser output and the refined output.
//!
//! ```text
//! cargo run --release --example fit_two_stage -- [feature_width] [epochs1] [epochs2]
//! ```

use std::time::Instant;

use cbvd::frames::moving_pattern;
use cbvd::metrics::MetricsReport;
use cbvd::noise::{corrupt, NoiseSpec};
use cbvd::trainer::{denoise_sequence, train_stage1_with, train_stage2_with, OutputStage, TrainConfig};

fn main() -> cbvd::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let width = args.first().copied().unwrap_or(32);
    let epochs1 = args.get(1).copied().unwrap_or(300);
    let epochs2 = args.get(2).copied().unwrap_or(300);
    let refine_width = args.get(3).copied().unwrap_or(256);

    let clean = moving_pattern(10, 48, 48, 3)?;
    let noisy = corrupt(&clean, &NoiseSpec::gaussian(25.0, 7))?;
    let cfg = TrainConfig {
        feature_width: width,
        refine_width,
        epochs_stage1: epochs1,
        epochs_stage2: epochs2,
        ..TrainConfig::default()
    };

    let every = (epochs1.max(epochs2) / 10).max(1);
    let log = |e: &cbvd::trainer::EpochLog| {
        if e.epoch.is_multiple_of(every) {
            println!("{e}");
        }
    };
    let start = Instant::now();
    let s1 = train_stage1_with(&noisy, &cfg, log)?;
    println!("stage 1 took {:.1}s", start.elapsed().as_secs_f64());
    let start = Instant::now();
    let s2 = train_stage2_with(&noisy, &s1, &cfg, log)?;
    println!("stage 2 took {:.1}s", start.elapsed().as_secs_f64());

    let truth = noisy.clean().expect("corrupt keeps clean");
    let report = |name: &str, frames: &[cbvd::tensor::Tensor]| -> cbvd::Result<()> {
        let r = MetricsReport::evaluate(name, "gaussian", 25.0, frames, truth)?;
        println!("{name:<9} PSNR {:.2} dB  SSIM {:.4}", r.mean_psnr(), r.mean_ssim());
        Ok(())
    };
    report("noisy", noisy.frames())?;
    report(
        "denoiser",
        denoise_sequence(&s2, &noisy, OutputStage::Denoiser)?.frames(),
    )?;
    report("refined", denoise_sequence(&s2, &noisy, OutputStage::Refined)?.frames())?;
    Ok(())
}

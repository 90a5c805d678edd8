//! Corrupts the synthetic clip with each noise model, freezes the results to
//! PNG directories and prints how far each noisy copy is from the clean one.
//!
//! ```text
//! cargo run --release --example corrupt_frames -- [out_dir]
//! ```

use std::path::PathBuf;

use cbvd::frames::{load_dir, moving_pattern};
use cbvd::metrics::{psnr, ssim};
use cbvd::noise::{freeze_dataset, NoiseSpec};

fn main() -> cbvd::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("cbvd_corrupt"));
    let clean = moving_pattern(6, 64, 64, 3)?.quantized();

    let specs = [
        ("gaussian_s30", NoiseSpec::gaussian(30.0, 1)),
        ("poisson_l30", NoiseSpec::poisson(30.0, 1)),
        ("impulse_a0.2", NoiseSpec::impulse(0.2, 1)),
    ];
    for (name, spec) in specs {
        let dir = out.join(name);
        let (manifest, _) = freeze_dataset(&clean, &spec, &dir)?;
        let reloaded = load_dir(&dir)?;
        let (mut p, mut s) = (0.0, 0.0);
        for (noisy, truth) in reloaded.frames().iter().zip(clean.frames()) {
            p += psnr(noisy, truth)?;
            s += ssim(noisy, truth)?;
        }
        let n = reloaded.len() as f64;
        println!(
            "{name:<13} {} frames  PSNR {:.2} dB  SSIM {:.4}  -> {}",
            manifest.frames,
            p / n,
            s / n,
            dir.display()
        );
    }
    Ok(())
}

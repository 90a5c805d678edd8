//! Trains a tiny model for a few epochs, saves it, loads it back and checks
//! that both copies denoise identically. Also shows that damaged files are
//! rejected.

use cbvd::frames::moving_pattern;
use cbvd::noise::{corrupt, NoiseSpec};
use cbvd::trainer::{
    denoise_sequence, load_checkpoint, save_checkpoint, train_stage1, train_stage2, Checkpoint, OutputStage,
    TrainConfig,
};

fn main() -> cbvd::Result<()> {
    let clean = moving_pattern(5, 16, 16, 3)?;
    let noisy = corrupt(&clean, &NoiseSpec::gaussian(20.0, 2))?;
    let cfg = TrainConfig {
        levels: 6,
        feature_width: 8,
        denoise_widths: vec![16, 8],
        refine_width: 16,
        refine_hidden: 2,
        epochs_stage1: 5,
        epochs_stage2: 5,
        ..TrainConfig::default()
    };
    let s1 = train_stage1(&noisy, &cfg)?;
    let ckpt = train_stage2(&noisy, &s1, &cfg)?;

    let dir = std::env::temp_dir().join("cbvd_checkpoint_example");
    let path = dir.join("model.ckpt");
    save_checkpoint(&ckpt, &path)?;
    let bytes = std::fs::read(&path).map_err(|e| cbvd::Error::Checkpoint(e.to_string()))?;
    println!("saved {} ({} bytes, stage {})", path.display(), bytes.len(), ckpt.stage);

    let back = load_checkpoint(&path)?;
    assert_eq!(back, ckpt);
    let a = denoise_sequence(&ckpt, &noisy, OutputStage::Refined)?;
    let b = denoise_sequence(&back, &noisy, OutputStage::Refined)?;
    println!("reloaded model output identical: {}", a == b);

    for cut in [3, 40, bytes.len() / 2, bytes.len() - 1] {
        match Checkpoint::from_bytes(&bytes[..cut]) {
            Ok(_) => println!("truncated to {cut} bytes: unexpectedly loaded"),
            Err(e) => println!("truncated to {cut} bytes: {e}"),
        }
    }
    let mut bad = bytes.clone();
    bad[4..8].copy_from_slice(&9u32.to_le_bytes());
    println!("version 9: {}", Checkpoint::from_bytes(&bad).unwrap_err());
    Ok(())
}

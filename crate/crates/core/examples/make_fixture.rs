//! Regenerates the committed desk fixture: a 10-frame 48×48 RGB synthetic
//! clip and its frozen Gaussian σ = 25 copy.
//!
//! ```text
//! cargo run --release --example make_fixture -- [out_dir]
//! ```

use std::path::PathBuf;

use cbvd::frames::{moving_pattern, save_dir};
use cbvd::noise::{freeze_dataset, NoiseSpec};

fn main() -> cbvd::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/desk"));
    let clean = moving_pattern(10, 48, 48, 3)?.quantized();
    save_dir(&clean, &root.join("clean"))?;
    let (manifest, _) = freeze_dataset(&clean, &NoiseSpec::gaussian(25.0, 7), &root.join("noisy_g25"))?;
    println!("{}", manifest.to_text());
    println!("fixture written to {}", root.display());
    Ok(())
}

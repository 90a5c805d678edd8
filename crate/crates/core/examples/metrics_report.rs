//! Scores progressively noisier copies of a frame and renders the results as
//! a report table (CSV plus aligned text).

use cbvd::frames::moving_pattern;
use cbvd::metrics::{report, MetricsReport};
use cbvd::noise::{add_gaussian, add_impulse};

fn main() -> cbvd::Result<()> {
    let clean = moving_pattern(4, 64, 64, 3)?;
    let mut rows = Vec::new();
    for sigma in [5.0, 15.0, 30.0, 50.0] {
        let noisy = add_gaussian(&clean, sigma, 3)?;
        let r = MetricsReport::evaluate("noisy", "gaussian", sigma, noisy.frames(), clean.frames())?;
        rows.push(r.summary_row());
    }
    for alpha in [0.05, 0.2] {
        let noisy = add_impulse(&clean, alpha, 3)?;
        let r = MetricsReport::evaluate("noisy", "impulse", alpha, noisy.frames(), clean.frames())?;
        rows.push(r.summary_row());
    }
    let identical = MetricsReport::evaluate("identity", "none", 0.0, clean.frames(), clean.frames())?;
    rows.push(identical.summary_row());

    let table = report(rows)?;
    println!("{}", table.to_text());
    println!("{}", table.to_csv());
    Ok(())
}

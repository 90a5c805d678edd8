//! Builds a coordinate grid and its positional encoding, and prints how the
//! encoded channels are laid out.

use cbvd::grid::{encode, encoded_dim, make_grid};

fn main() -> cbvd::Result<()> {
    let (h, w, n) = (4, 6, 10);
    let grid = make_grid(h, w, 3, n)?;
    println!("grid {}x{} for frame 3 of {n}, t = {:.4}", h, w, grid.t_norm());
    println!("corner (0,0) = {:?}", grid.at(0, 0));
    println!("corner ({},{}) = {:?}", h - 1, w - 1, grid.at(h - 1, w - 1));

    for levels in [1, 5, 30] {
        println!(
            "L = {levels:>2}: {} channels ({} with raw coordinates appended)",
            encoded_dim(levels, false),
            encoded_dim(levels, true)
        );
    }

    let levels = 3;
    let enc = encode(&grid, levels, false)?;
    let d = enc.dim();
    let v = enc.values();
    println!("\nencoding of (0,0) with L = {levels} ({d} values):");
    for (c, axis) in ["x", "y", "t"].iter().enumerate() {
        for j in 0..levels {
            let base = (c * levels + j) * 2;
            println!(
                "  {axis} level {j}: sin = {:+.4}  cos = {:+.4}",
                v.data()[base],
                v.data()[base + 1]
            );
        }
    }
    let cf = enc.channels_first();
    println!("\nchannels-first tensor shape {:?}", cf.shape());
    Ok(())
}

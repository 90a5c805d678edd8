//! Normalized `(x, y, t)` coordinate grids and their sinusoidal encoding.
//!
//! Each coordinate component `c` is expanded into
//! `[sin(2^0 π c), cos(2^0 π c), …, sin(2^(L-1) π c), cos(2^(L-1) π c)]`.
//! Channels are laid out component-major, level-minor, sine before cosine;
//! the raw coordinates, when requested, come last.

use std::f64::consts::PI;

use crate::tensor::Tensor;
use crate::{Error, Result};

/// Coordinate components per pixel: x, y, t.
pub const COORD_DIMS: usize = 3;

/// Position `i` of an `n`-point linspace over `[-1, 1]`; a single point sits at 0.
pub fn linspace_point(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        -1.0 + 2.0 * i as f64 / (n - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordGrid {
    height: usize,
    width: usize,
    frame_index: usize,
    sequence_len: usize,
    /// `[H, W, 3]`
    values: Tensor,
}

impl CoordGrid {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn sequence_len(&self) -> usize {
        self.sequence_len
    }

    pub fn t_norm(&self) -> f32 {
        self.values.data()[2]
    }

    /// `[H, W, 3]` coordinates.
    pub fn values(&self) -> &Tensor {
        &self.values
    }

    /// `(x, y, t)` at pixel `(row, col)`.
    pub fn at(&self, row: usize, col: usize) -> [f32; 3] {
        let o = (row * self.width + col) * COORD_DIMS;
        let d = self.values.data();
        [d[o], d[o + 1], d[o + 2]]
    }

    /// One row per pixel, `[H·W, 3]`, in raster order.
    pub fn as_rows(&self) -> Tensor {
        self.values
            .clone()
            .reshape([self.height * self.width, COORD_DIMS])
            .expect("same element count")
    }
}

/// Builds the grid for frame `t` of an `n`-frame sequence. `x` follows the
/// width axis, `y` the height axis, and `t` is normalized over the sequence.
pub fn make_grid(height: usize, width: usize, t: usize, n: usize) -> Result<CoordGrid> {
    if height == 0 || width == 0 {
        return Err(Error::Contract(format!("empty grid {height}x{width}")));
    }
    if t >= n {
        return Err(Error::Index(format!("frame {t} of a {n}-frame sequence")));
    }
    let tn = linspace_point(t, n) as f32;
    let mut data = Vec::with_capacity(height * width * COORD_DIMS);
    for row in 0..height {
        let y = linspace_point(row, height) as f32;
        for col in 0..width {
            data.extend_from_slice(&[linspace_point(col, width) as f32, y, tn]);
        }
    }
    Ok(CoordGrid {
        height,
        width,
        frame_index: t,
        sequence_len: n,
        values: Tensor::new([height, width, COORD_DIMS], data)?,
    })
}

/// Channel count of an encoding with `levels` frequencies.
pub fn encoded_dim(levels: usize, append_raw: bool) -> usize {
    2 * COORD_DIMS * levels + if append_raw { COORD_DIMS } else { 0 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedGrid {
    levels: usize,
    append_raw: bool,
    /// `[H, W, D]`
    values: Tensor,
}

impl EncodedGrid {
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn append_raw(&self) -> bool {
        self.append_raw
    }

    pub fn dim(&self) -> usize {
        self.values.shape()[2]
    }

    /// `[H, W, D]`
    pub fn values(&self) -> &Tensor {
        &self.values
    }

    /// Channels-first copy, `[D, H, W]`, as consumed by the convolutions.
    pub fn channels_first(&self) -> Tensor {
        let [h, w, d] = [self.values.shape()[0], self.values.shape()[1], self.dim()];
        let src = self.values.data();
        let mut out = vec![0.0f32; d * h * w];
        for p in 0..h * w {
            for c in 0..d {
                out[c * h * w + p] = src[p * d + c];
            }
        }
        Tensor::new([d, h, w], out).expect("same element count")
    }
}

/// Encodes a single coordinate vector; used by [`encode`] and handy for tests.
pub fn encode_point(p: [f32; 3], levels: usize, append_raw: bool, out: &mut Vec<f32>) {
    for &c in &p {
        for j in 0..levels {
            // f64 keeps the phase accurate at the highest octaves
            let arg = (2.0f64).powi(j as i32) * PI * c as f64;
            out.push(arg.sin() as f32);
            out.push(arg.cos() as f32);
        }
    }
    if append_raw {
        out.extend_from_slice(&p);
    }
}

pub fn encode(grid: &CoordGrid, levels: usize, append_raw: bool) -> Result<EncodedGrid> {
    if levels == 0 {
        return Err(Error::Config("frequency level L must be at least 1".into()));
    }
    let d = encoded_dim(levels, append_raw);
    let (h, w) = (grid.height, grid.width);
    let mut data = Vec::with_capacity(h * w * d);
    for row in 0..h {
        for col in 0..w {
            encode_point(grid.at(row, col), levels, append_raw, &mut data);
        }
    }
    Ok(EncodedGrid {
        levels,
        append_raw,
        values: Tensor::new([h, w, d], data)?,
    })
}

//! Thin safe layer over `matrixmultiply::sgemm` plus the im2col/col2im
//! lowering used by the convolution.

/// Strided view of an `rows × cols` matrix inside a slice.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    data: &'a [f32],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a> View<'a> {
    /// Row-major `rows × cols`.
    pub fn new(data: &'a [f32], rows: usize, cols: usize) -> Self {
        assert!(data.len() >= rows * cols);
        Self {
            data,
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }
}

/// `c = a · b + beta · c`, with `c` row-major `a.rows × b.cols`.
pub(crate) fn matmul(a: View<'_>, b: View<'_>, c: &mut [f32], beta: f32) {
    assert_eq!(a.cols, b.rows, "inner extents differ");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // Largest reachable offsets stay inside each slice.
    assert!((m - 1) * a.rs + (k - 1) * a.cs < a.data.len());
    assert!((k - 1) * b.rs + (n - 1) * b.cs < b.data.len());
    // SAFETY: extents and strides were checked against the slice lengths above,
    // and `c` is an exclusive borrow of at least m*n elements.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Lowers one `channels × h × w` image into a `(channels·k·k) × (h·w)` patch
/// matrix with zero fill outside the image.
pub(crate) fn im2col(x: &[f32], channels: usize, h: usize, w: usize, k: usize, out: &mut [f32]) {
    let pad = (k - 1) / 2;
    let hw = h * w;
    debug_assert_eq!(out.len(), channels * k * k * hw);
    for c in 0..channels {
        let plane = &x[c * hw..(c + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut out[row * hw..(row + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad as isize;
                    let line = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        line.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let (lo, hi) = valid_span(kx, pad, w);
                    line[..lo].iter_mut().for_each(|v| *v = 0.0);
                    line[hi..].iter_mut().for_each(|v| *v = 0.0);
                    if lo < hi {
                        line[lo..hi].copy_from_slice(&src[lo + kx - pad..hi + kx - pad]);
                    }
                }
            }
        }
    }
}

/// Output columns `lo..hi` whose source column `x + kx - pad` lies inside
/// `0..w`.
fn valid_span(kx: usize, pad: usize, w: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kx).min(w);
    let hi = (w + pad).saturating_sub(kx).min(w).max(lo);
    (lo, hi)
}

/// Adjoint of [`im2col`]: scatters patch-matrix gradients back into an image.
pub(crate) fn col2im_add(cols: &[f32], channels: usize, h: usize, w: usize, k: usize, dx: &mut [f32]) {
    let pad = (k - 1) / 2;
    let hw = h * w;
    for c in 0..channels {
        let plane = &mut dx[c * hw..(c + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let line = &src[y * w..(y + 1) * w];
                    let (lo, hi) = valid_span(kx, pad, w);
                    if lo == hi {
                        continue;
                    }
                    for (d, &g) in dst[lo + kx - pad..hi + kx - pad].iter_mut().zip(&line[lo..hi]) {
                        *d += g;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_naive_with_transposes() {
        let a: Vec<f32> = (0..6).map(|v| v as f32).collect(); // 2x3
        let b: Vec<f32> = (0..12).map(|v| (v as f32) * 0.5).collect(); // 3x4
        let mut c = vec![0.0; 8];
        matmul(View::new(&a, 2, 3), View::new(&b, 3, 4), &mut c, 0.0);
        for i in 0..2 {
            for j in 0..4 {
                let want: f32 = (0..3).map(|p| a[i * 3 + p] * b[p * 4 + j]).sum();
                assert_eq!(c[i * 4 + j], want);
            }
        }
        // (a^T)^T · b through a transposed view of a 3x2 buffer
        let at: Vec<f32> = vec![0., 3., 1., 4., 2., 5.];
        let mut c2 = vec![0.0; 8];
        matmul(View::new(&at, 3, 2).t(), View::new(&b, 3, 4), &mut c2, 0.0);
        assert_eq!(c, c2);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let (c, h, w, k) = (2, 4, 5, 3);
        let x: Vec<f32> = (0..c * h * w).map(|v| ((v * 7) % 11) as f32 - 5.0).collect();
        let y: Vec<f32> = (0..c * k * k * h * w).map(|v| ((v * 5) % 13) as f32 - 6.0).collect();
        let mut cols = vec![0.0; y.len()];
        im2col(&x, c, h, w, k, &mut cols);
        let lhs: f32 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im_add(&y, c, h, w, k, &mut back);
        let rhs: f32 = back.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
    }
}

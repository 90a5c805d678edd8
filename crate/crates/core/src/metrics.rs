//! PSNR / SSIM on `[C, H, W]` frames with unit data range, and the report
//! tables built from them.

use std::fmt::Write as _;
use std::path::Path;

use crate::tensor::Tensor;
use crate::{Error, Result};

/// PSNR reported for identical frames.
pub const PSNR_CAP_DB: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn same_shape(a: &Tensor, b: &Tensor, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Contract(format!(
            "{op}: shapes differ, {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    same_shape(a, b, "mse")?;
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum();
    Ok(s / a.numel() as f64)
}

/// `10·log10(1 / MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &Tensor, b: &Tensor) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP_DB))
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable "valid" filtering of an `h × w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let k = gaussian_window();
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect() };
    let mu_a = filter_valid(a, h, w, &k);
    let mu_b = filter_valid(b, h, w, &k);
    let e_aa = filter_valid(&prod(&|x, _| x * x), h, w, &k);
    let e_bb = filter_valid(&prod(&|_, y| y * y), h, w, &k);
    let e_ab = filter_valid(&prod(&|x, y| x * y), h, w, &k);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
    }
    total / n as f64
}

/// Mean local SSIM (11×11 Gaussian window, σ = 1.5, K1 = 0.01, K2 = 0.03),
/// averaged over channels.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    same_shape(a, b, "ssim")?;
    let [c, h, w] = match *a.shape() {
        [c, h, w] => [c, h, w],
        ref s => return Err(Error::Contract(format!("ssim expects [C, H, W], got {s:?}"))),
    };
    if h.min(w) < SSIM_WINDOW {
        return Err(Error::Contract(format!(
            "ssim needs frames of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let hw = h * w;
    let to64 =
        |t: &Tensor, ch: usize| -> Vec<f64> { t.data()[ch * hw..(ch + 1) * hw].iter().map(|&v| v as f64).collect() };
    let total: f64 = (0..c).map(|ch| ssim_plane(&to64(a, ch), &to64(b, ch), h, w)).sum();
    Ok(total / c as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMetrics {
    pub psnr: f64,
    pub ssim: f64,
}

/// Per-frame scores for one model variant on one noisy sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub variant: String,
    pub noise_kind: String,
    pub noise_param: f64,
    pub levels: Option<usize>,
    pub frames: Vec<FrameMetrics>,
}

impl MetricsReport {
    pub fn evaluate(
        variant: impl Into<String>,
        noise_kind: impl Into<String>,
        noise_param: f64,
        outputs: &[Tensor],
        clean: &[Tensor],
    ) -> Result<Self> {
        if outputs.len() != clean.len() {
            return Err(Error::Contract(format!(
                "{} output frames but {} clean frames",
                outputs.len(),
                clean.len()
            )));
        }
        let frames = outputs
            .iter()
            .zip(clean)
            .map(|(o, c)| {
                Ok(FrameMetrics {
                    psnr: psnr(o, c)?,
                    ssim: ssim(o, c)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            variant: variant.into(),
            noise_kind: noise_kind.into(),
            noise_param,
            levels: None,
            frames,
        })
    }

    pub fn mean_psnr(&self) -> f64 {
        self.frames.iter().map(|f| f.psnr).sum::<f64>() / self.frames.len() as f64
    }

    pub fn mean_ssim(&self) -> f64 {
        self.frames.iter().map(|f| f.ssim).sum::<f64>() / self.frames.len() as f64
    }

    pub fn summary_row(&self) -> ReportRow {
        ReportRow {
            variant: self.variant.clone(),
            noise_kind: self.noise_kind.clone(),
            noise_param: self.noise_param,
            psnr_db: self.mean_psnr(),
            ssim: self.mean_ssim(),
        }
    }

    /// One row per frame (`frame_00000`, …) followed by the `mean` row.
    pub fn per_frame_rows(&self) -> Vec<ReportRow> {
        let mut rows: Vec<ReportRow> = self
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| ReportRow {
                variant: format!("frame_{i:05}"),
                noise_kind: self.noise_kind.clone(),
                noise_param: self.noise_param,
                psnr_db: f.psnr,
                ssim: f.ssim,
            })
            .collect();
        rows.push(ReportRow {
            variant: "mean".into(),
            ..self.summary_row()
        });
        rows
    }
}

pub const REPORT_HEADER: &str = "variant,noise_kind,noise_param,psnr_db,ssim";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub variant: String,
    pub noise_kind: String,
    pub noise_param: f64,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    rows: Vec<ReportRow>,
}

/// Builds a table preserving row order.
pub fn report(rows: Vec<ReportRow>) -> Result<ReportTable> {
    if rows.is_empty() {
        return Err(Error::Contract("report needs at least one row".into()));
    }
    Ok(ReportTable { rows })
}

impl ReportTable {
    pub fn rows(&self) -> &[ReportRow] {
        &self.rows
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:.6},{:.6}",
                r.variant, r.noise_kind, r.noise_param, r.psnr_db, r.ssim
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        let vw = self.rows.iter().map(|r| r.variant.len()).max().unwrap_or(0).max(7);
        let kw = self.rows.iter().map(|r| r.noise_kind.len()).max().unwrap_or(0).max(5);
        let mut s = format!(
            "{:<vw$}  {:<kw$}  {:>8}  {:>9}  {:>7}\n",
            "variant", "noise", "param", "PSNR(dB)", "SSIM"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<vw$}  {:<kw$}  {:>8}  {:>9.2}  {:>7.4}",
                r.variant, r.noise_kind, r.noise_param, r.psnr_db, r.ssim
            );
        }
        s
    }

    /// Writes the CSV to `path` and the aligned rendering next to it (`.txt`).
    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))?;
        let txt = path.with_extension("txt");
        std::fs::write(&txt, self.to_text()).map_err(|e| Error::io(&txt, e))
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(REPORT_HEADER) {
            return Err(Error::Contract("report header mismatch".into()));
        }
        let rows = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                let num = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Contract(format!("bad number '{s}' in report")))
                };
                if f.len() != 5 {
                    return Err(Error::Contract(format!("bad report line '{l}'")));
                }
                Ok(ReportRow {
                    variant: f[0].into(),
                    noise_kind: f[1].into(),
                    noise_param: num(f[2])?,
                    psnr_db: num(f[3])?,
                    ssim: num(f[4])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        report(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn noise_frame(seed: u32, c: usize, h: usize, w: usize) -> Tensor {
        let mut s = seed.wrapping_mul(2654435761).wrapping_add(1);
        Tensor::from_fn([c, h, w], |_| {
            s ^= s << 13;
            s ^= s >> 17;
            s ^= s << 5;
            (s % 1000) as f32 / 999.0
        })
    }

    #[test]
    fn psnr_fixed_points() {
        let a = noise_frame(1, 3, 8, 8);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        let zeros = Tensor::zeros([1, 4, 4]);
        let ones = Tensor::full([1, 4, 4], 1.0);
        assert_eq!(psnr(&zeros, &ones).unwrap(), 0.0);
        let tenth = Tensor::full([1, 4, 4], 0.1);
        assert!((psnr(&zeros, &tenth).unwrap() - 20.0).abs() < 1e-5);
        assert!(psnr(&zeros, &Tensor::zeros([1, 4, 5])).is_err());
    }

    #[test]
    fn ssim_fixed_points() {
        let a = noise_frame(2, 3, 16, 16);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-6);
        let g = Tensor::full([1, 12, 12], 0.5);
        assert!((ssim(&g, &g).unwrap() - 1.0).abs() < 1e-12);
        let small = Tensor::zeros([1, 10, 20]);
        assert!(ssim(&small, &small).is_err());
    }

    #[test]
    fn report_preserves_order_and_header() {
        let rows = vec![
            ReportRow {
                variant: "F+D".into(),
                noise_kind: "gaussian".into(),
                noise_param: 30.0,
                psnr_db: 27.5,
                ssim: 0.8,
            },
            ReportRow {
                variant: "F+D+R".into(),
                noise_kind: "gaussian".into(),
                noise_param: 30.0,
                psnr_db: 28.0,
                ssim: 0.81,
            },
        ];
        let t = report(rows.clone()).unwrap();
        let csv = t.to_csv();
        assert!(csv.starts_with("variant,noise_kind,noise_param,psnr_db,ssim\n"));
        assert_eq!(ReportTable::parse_csv(&csv).unwrap().rows()[1].variant, "F+D+R");
        assert!(t.to_text().contains("PSNR(dB)"));
        let single = report(rows[..1].to_vec()).unwrap();
        assert_eq!(single.to_csv().lines().count(), 2);
        assert!(report(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn metrics_are_symmetric(seed_a in 0u32..1000, seed_b in 1000u32..2000) {
            let a = noise_frame(seed_a, 1, 12, 14);
            let b = noise_frame(seed_b, 1, 12, 14);
            prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
            prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
            let s = ssim(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }
}

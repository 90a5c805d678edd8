//! Frame sequences and 8-bit PNG frame directories (`frame_%05d.png`).

use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, RgbImage};

use crate::tensor::Tensor;
use crate::{Error, Result};

/// Ordered frames, each `[C, H, W]` with values in `[0, 1]`, plus optional
/// clean ground truth of identical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Tensor>,
    clean: Option<Vec<Tensor>>,
}

fn check_frames(frames: &[Tensor]) -> Result<()> {
    let Some(first) = frames.first() else {
        return Err(Error::Contract("frame sequence is empty".into()));
    };
    if first.rank() != 3 {
        return Err(Error::Contract(format!(
            "frames must be [C, H, W], got {:?}",
            first.shape()
        )));
    }
    for (i, f) in frames.iter().enumerate() {
        if f.shape() != first.shape() {
            return Err(Error::Contract(format!(
                "frame {i} has shape {:?}, expected {:?}",
                f.shape(),
                first.shape()
            )));
        }
        if let Some(v) = f.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Contract(format!("frame {i} holds {v} outside [0, 1]")));
        }
    }
    Ok(())
}

impl FrameSequence {
    pub fn new(frames: Vec<Tensor>) -> Result<Self> {
        check_frames(&frames)?;
        Ok(Self { frames, clean: None })
    }

    pub fn with_clean(mut self, clean: Vec<Tensor>) -> Result<Self> {
        check_frames(&clean)?;
        if clean.len() != self.frames.len() || clean[0].shape() != self.frames[0].shape() {
            return Err(Error::Contract(format!(
                "clean sequence ({} x {:?}) does not match frames ({} x {:?})",
                clean.len(),
                clean[0].shape(),
                self.frames.len(),
                self.frames[0].shape()
            )));
        }
        self.clean = Some(clean);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.frames[0].shape()[0]
    }

    pub fn height(&self) -> usize {
        self.frames[0].shape()[1]
    }

    pub fn width(&self) -> usize {
        self.frames[0].shape()[2]
    }

    pub fn frame(&self, i: usize) -> &Tensor {
        &self.frames[i]
    }

    pub fn frames(&self) -> &[Tensor] {
        &self.frames
    }

    pub fn clean(&self) -> Option<&[Tensor]> {
        self.clean.as_deref()
    }

    pub fn into_frames(self) -> Vec<Tensor> {
        self.frames
    }

    /// Rounds every value to the nearest 8-bit level.
    pub fn quantized(&self) -> Self {
        Self {
            frames: self.frames.iter().map(quantize).collect(),
            clean: self.clean.clone(),
        }
    }
}

pub fn quantize(t: &Tensor) -> Tensor {
    let data = t.data().iter().map(|&v| to_u8(v) as f32 / 255.0).collect();
    Tensor::new(t.shape().to_vec(), data).expect("same shape")
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.png")
}

fn parse_frame_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".png")?;
    (digits.len() == 5 && digits.bytes().all(|b| b.is_ascii_digit()))
        .then(|| digits.parse().ok())
        .flatten()
}

/// Number of contiguous `frame_%05d.png` files starting at index 0. Fails on
/// an empty directory or a gap, naming the first missing index.
pub fn count_frames(dir: &Path) -> Result<usize> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut indices = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if let Some(i) = entry.file_name().to_str().and_then(parse_frame_index) {
            indices.push(i);
        }
    }
    indices.sort_unstable();
    if indices.is_empty() {
        return Err(Error::Contract(format!(
            "no frame_%05d.png files in {} (first missing index: 0)",
            dir.display()
        )));
    }
    for (expect, &got) in indices.iter().enumerate() {
        if expect != got {
            return Err(Error::Contract(format!(
                "{}: frame sequence has a gap, first missing index {expect}",
                dir.display()
            )));
        }
    }
    Ok(indices.len())
}

pub fn load_frame(path: &Path) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (c, raw) = match img {
        DynamicImage::ImageLuma8(g) => (1, g.into_raw()),
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => {
            (1, img.to_luma8().into_raw())
        }
        other => (3, other.to_rgb8().into_raw()),
    };
    let mut data = vec![0.0f32; c * h * w];
    for p in 0..h * w {
        for ch in 0..c {
            data[ch * h * w + p] = raw[p * c + ch] as f32 / 255.0;
        }
    }
    Ok(Tensor::new([c, h, w], data)?)
}

pub fn save_frame(frame: &Tensor, path: &Path) -> Result<()> {
    let [c, h, w] = match *frame.shape() {
        [c, h, w] => [c, h, w],
        ref s => return Err(Error::Contract(format!("frame shape {s:?} is not [C, H, W]"))),
    };
    let d = frame.data();
    let interleaved: Vec<u8> = (0..h * w)
        .flat_map(|p| (0..c).map(move |ch| to_u8(d[ch * h * w + p])))
        .collect();
    let img_err = |reason: String| Error::Image {
        path: path.to_path_buf(),
        reason,
    };
    let res = match c {
        1 => GrayImage::from_raw(w as u32, h as u32, interleaved)
            .ok_or_else(|| img_err("buffer size".into()))?
            .save(path),
        3 => RgbImage::from_raw(w as u32, h as u32, interleaved)
            .ok_or_else(|| img_err("buffer size".into()))?
            .save(path),
        _ => return Err(img_err(format!("cannot write {c}-channel PNG"))),
    };
    res.map_err(|e| img_err(e.to_string()))
}

pub fn load_dir(dir: &Path) -> Result<FrameSequence> {
    let n = count_frames(dir)?;
    let frames = (0..n)
        .map(|i| load_frame(&dir.join(frame_file_name(i))))
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames)
}

/// Writes every frame as an 8-bit PNG; returns the written paths.
pub fn save_dir(seq: &FrameSequence, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    seq.frames()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let p = dir.join(frame_file_name(i));
            save_frame(f, &p).map(|_| p)
        })
        .collect()
}

/// Smooth synthetic clip: two drifting sinusoidal gratings and a soft disc
/// moving across the frame, per-channel phase offsets, values in `[0.1, 0.9]`.
pub fn moving_pattern(frames: usize, height: usize, width: usize, channels: usize) -> Result<FrameSequence> {
    use std::f64::consts::PI;
    let seq = (0..frames)
        .map(|t| {
            let tf = t as f64;
            Tensor::from_fn([channels, height, width], |i| {
                let c = (i / (height * width)) as f64;
                let y = ((i / width) % height) as f64 / height as f64;
                let x = (i % width) as f64 / width as f64;
                let g1 = (2.0 * PI * (1.5 * x + 0.7 * y) + 0.35 * tf + 1.3 * c).sin();
                let g2 = (2.0 * PI * (0.6 * x - 1.2 * y) - 0.2 * tf + 0.7 * c).cos();
                let (cx, cy) = (0.25 + 0.05 * tf, 0.6 - 0.03 * tf);
                let r2 = (x - cx).powi(2) + (y - cy).powi(2);
                let disc = 1.0 / (1.0 + ((r2.sqrt() - 0.18) * 40.0).exp());
                let v = 0.5 + 0.18 * g1 + 0.12 * g2 + 0.25 * disc * (1.0 - 0.4 * c);
                v.clamp(0.1, 0.9) as f32
            })
        })
        .collect();
    FrameSequence::new(seq)
}

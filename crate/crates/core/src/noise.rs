//! Synthetic corruption and frozen noisy datasets.
//!
//! Gaussian σ is given on the 8-bit scale (σ = 30 means 30/255 on `[0, 1]`
//! data). Poisson noise uses the peak-rate convention `Poisson(x·λ)/λ`.
//! Impulse noise replaces a fraction α of pixel locations by 0 or 1 with
//! equal odds. Outputs are clipped to `[0, 1]`.
//!
//! Every frame draws from its own ChaCha stream `(seed, frame_index)`, so
//! corruption is reproducible and independent of processing order.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::frames::{quantize, save_dir, FrameSequence};
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Gaussian,
    Poisson,
    Impulse,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Poisson => "poisson",
            NoiseKind::Impulse => "impulse",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseKind::Gaussian),
            "poisson" => Ok(NoiseKind::Poisson),
            "impulse" => Ok(NoiseKind::Impulse),
            other => Err(Error::Config(format!(
                "unknown noise kind '{other}' (expected gaussian, poisson or impulse)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Gaussian standard deviation on the 8-bit scale.
    pub sigma: f64,
    /// Poisson peak rate.
    pub lambda: f64,
    /// Impulse corrupted-pixel fraction.
    pub alpha: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            sigma,
            lambda: 30.0,
            alpha: 0.2,
            seed,
        }
    }

    pub fn poisson(lambda: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Poisson,
            lambda,
            ..Self::gaussian(30.0, seed)
        }
    }

    pub fn impulse(alpha: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Impulse,
            alpha,
            ..Self::gaussian(30.0, seed)
        }
    }

    /// The parameter that matters for this kind.
    pub fn param(&self) -> f64 {
        match self.kind {
            NoiseKind::Gaussian => self.sigma,
            NoiseKind::Poisson => self.lambda,
            NoiseKind::Impulse => self.alpha,
        }
    }

    pub fn param_name(&self) -> &'static str {
        match self.kind {
            NoiseKind::Gaussian => "sigma",
            NoiseKind::Poisson => "lambda",
            NoiseKind::Impulse => "alpha",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            NoiseKind::Gaussian => self.sigma.is_finite() && self.sigma >= 0.0,
            NoiseKind::Poisson => self.lambda.is_finite() && self.lambda > 0.0,
            NoiseKind::Impulse => (0.0..=1.0).contains(&self.alpha),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{} noise needs a valid {} (got {})",
                self.kind,
                self.param_name(),
                self.param()
            )))
        }
    }
}

fn frame_rng(seed: u64, frame_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame_index as u64);
    rng
}

/// Pre-clip Gaussian-corrupted values `x + n`, `n ~ N(0, (σ/255)²)`.
pub fn gaussian_raw(frame: &Tensor, sigma: f64, seed: u64, frame_index: usize) -> Vec<f32> {
    if sigma == 0.0 {
        return frame.data().to_vec();
    }
    let dist = Normal::new(0.0, sigma / 255.0).expect("sigma checked non-negative");
    let mut rng = frame_rng(seed, frame_index);
    frame
        .data()
        .iter()
        .map(|&x| (x as f64 + dist.sample(&mut rng)) as f32)
        .collect()
}

/// Pre-clip Poisson-corrupted values `Poisson(x·λ)/λ`.
pub fn poisson_raw(frame: &Tensor, lambda: f64, seed: u64, frame_index: usize) -> Vec<f32> {
    let mut rng = frame_rng(seed, frame_index);
    frame
        .data()
        .iter()
        .map(|&x| {
            let rate = x as f64 * lambda;
            if rate <= 0.0 {
                0.0
            } else {
                let k: f64 = Poisson::new(rate).expect("positive rate").sample(&mut rng);
                (k / lambda) as f32
            }
        })
        .collect()
}

/// Salt-and-pepper over pixel locations: all channels of a hit pixel take
/// the same extreme value.
pub fn impulse_frame(frame: &Tensor, alpha: f64, seed: u64, frame_index: usize) -> Tensor {
    let [c, h, w] = [frame.shape()[0], frame.shape()[1], frame.shape()[2]];
    let hw = h * w;
    let mut out = frame.clone();
    let mut rng = frame_rng(seed, frame_index);
    let data = out.data_mut();
    for p in 0..hw {
        let hit = rng.random::<f64>() < alpha;
        let salt = rng.random::<bool>();
        if hit {
            let v = if salt { 1.0 } else { 0.0 };
            for ch in 0..c {
                data[ch * hw + p] = v;
            }
        }
    }
    out
}

fn clip(frame: &Tensor, raw: Vec<f32>) -> Tensor {
    let data = raw.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Tensor::new(frame.shape().to_vec(), data).expect("same shape")
}

fn corrupt_frames(seq: &FrameSequence, mut f: impl FnMut(usize, &Tensor) -> Tensor) -> Result<FrameSequence> {
    let noisy = seq.frames().iter().enumerate().map(|(i, x)| f(i, x)).collect();
    let clean = seq
        .clean()
        .map(<[Tensor]>::to_vec)
        .unwrap_or_else(|| seq.frames().to_vec());
    FrameSequence::new(noisy)?.with_clean(clean)
}

pub fn add_gaussian(seq: &FrameSequence, sigma: f64, seed: u64) -> Result<FrameSequence> {
    NoiseSpec::gaussian(sigma, seed).validate()?;
    corrupt_frames(seq, |i, x| clip(x, gaussian_raw(x, sigma, seed, i)))
}

pub fn add_poisson(seq: &FrameSequence, lambda: f64, seed: u64) -> Result<FrameSequence> {
    NoiseSpec::poisson(lambda, seed).validate()?;
    corrupt_frames(seq, |i, x| clip(x, poisson_raw(x, lambda, seed, i)))
}

pub fn add_impulse(seq: &FrameSequence, alpha: f64, seed: u64) -> Result<FrameSequence> {
    NoiseSpec::impulse(alpha, seed).validate()?;
    corrupt_frames(seq, |i, x| impulse_frame(x, alpha, seed, i))
}

/// Corrupts `seq` according to `spec`; the input frames become the clean
/// ground truth of the result.
pub fn corrupt(seq: &FrameSequence, spec: &NoiseSpec) -> Result<FrameSequence> {
    match spec.kind {
        NoiseKind::Gaussian => add_gaussian(seq, spec.sigma, spec.seed),
        NoiseKind::Poisson => add_poisson(seq, spec.lambda, spec.seed),
        NoiseKind::Impulse => add_impulse(seq, spec.alpha, spec.seed),
    }
}

pub const MANIFEST_FILE: &str = "manifest.txt";

/// Description of a frozen noisy dataset, stored as `key=value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub kind: NoiseKind,
    pub param: f64,
    pub seed: u64,
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let pname = match self.kind {
            NoiseKind::Gaussian => "sigma",
            NoiseKind::Poisson => "lambda",
            NoiseKind::Impulse => "alpha",
        };
        format!(
            "# frozen noisy dataset\nkind={}\n{pname}={}\nseed={}\nframes={}\nchannels={}\nheight={}\nwidth={}\n",
            self.kind, self.param, self.seed, self.frames, self.channels, self.height, self.width
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut param = None;
        let (mut seed, mut frames, mut channels, mut height, mut width) = (None, None, None, None, None);
        let bad = |m: String| Error::Config(format!("manifest: {m}"));
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed line '{line}'")))?;
            let (k, v) = (k.trim(), v.trim());
            let num = |v: &str| v.parse::<usize>().map_err(|_| bad(format!("bad value for {k}: {v}")));
            match k {
                "kind" => kind = Some(v.parse::<NoiseKind>()?),
                "sigma" | "lambda" | "alpha" => {
                    param = Some(v.parse::<f64>().map_err(|_| bad(format!("bad {k}: {v}")))?)
                }
                "seed" => seed = Some(v.parse::<u64>().map_err(|_| bad(format!("bad seed: {v}")))?),
                "frames" => frames = Some(num(v)?),
                "channels" => channels = Some(num(v)?),
                "height" => height = Some(num(v)?),
                "width" => width = Some(num(v)?),
                other => return Err(bad(format!("unknown key '{other}'"))),
            }
        }
        let need = |name: &str| bad(format!("missing {name}"));
        Ok(Self {
            kind: kind.ok_or_else(|| need("kind"))?,
            param: param.ok_or_else(|| need("noise parameter"))?,
            seed: seed.ok_or_else(|| need("seed"))?,
            frames: frames.ok_or_else(|| need("frames"))?,
            channels: channels.ok_or_else(|| need("channels"))?,
            height: height.ok_or_else(|| need("height"))?,
            width: width.ok_or_else(|| need("width"))?,
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&text)
    }
}

/// Corrupts `clean` once, writes the 8-bit noisy frames and a manifest to
/// `out_dir`, and returns the manifest with the sequence exactly as written.
pub fn freeze_dataset(clean: &FrameSequence, spec: &NoiseSpec, out_dir: &Path) -> Result<(Manifest, FrameSequence)> {
    let noisy = corrupt(clean, spec)?;
    let written = FrameSequence::new(noisy.frames().iter().map(quantize).collect())?
        .with_clean(noisy.clean().expect("corrupt keeps clean").to_vec())?;
    save_dir(&written, out_dir)?;
    let manifest = Manifest {
        kind: spec.kind,
        param: spec.param(),
        seed: spec.seed,
        frames: written.len(),
        channels: written.channels(),
        height: written.height(),
        width: written.width(),
    };
    let path = out_dir.join(MANIFEST_FILE);
    std::fs::write(&path, manifest.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok((manifest, written))
}

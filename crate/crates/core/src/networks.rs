//! Feature generator, denoiser and SIREN refiner.
//!
//! Parameter names follow the layer tables: `feature.conv_{0..5}`,
//! `feature.bn_{0,1}`, `denoise.conv_{i}`, `refine.mlp_{i}`, each with
//! `.weight`/`.bias` (or `.gamma`/`.beta` for batch norm).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{encoded_dim, COORD_DIMS};
use crate::tensor::{Bound, Graph, ParamSet, Tensor, Var};
use crate::{Error, Result};

const FEATURE_CONVS: usize = 6;
const FEATURE_BN_LAYERS: usize = 2;

/// Layer widths and hyperparameters that determine parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    /// Image channels (3 for RGB, 1 for grayscale).
    pub c_in: usize,
    /// Feature-map channels per frame.
    pub c_feat: usize,
    /// Frames per batch window (2K+1).
    pub batch_frames: usize,
    /// Positional-encoding frequency levels.
    pub levels: usize,
    pub append_raw: bool,
    /// Width of `feature.conv_0..conv_4`.
    pub feature_width: usize,
    /// Hidden widths of the denoiser; a final layer to `c_in` is always added.
    pub denoise_widths: Vec<usize>,
    /// Kernel size of the denoiser's hidden layers (its last layer is 1x1).
    pub denoise_kernel: usize,
    pub refine_width: usize,
    pub refine_hidden: usize,
    pub omega0: f32,
    pub bn_eps: f32,
}

impl Default for Architecture {
    fn default() -> Self {
        Self::for_channels(3, 5)
    }
}

impl Architecture {
    /// Table widths for `c_in` image channels and a `batch_frames` window,
    /// with `c_feat = c_in · batch_frames`.
    pub fn for_channels(c_in: usize, batch_frames: usize) -> Self {
        Self {
            c_in,
            c_feat: c_in * batch_frames,
            batch_frames,
            levels: 30,
            append_raw: false,
            feature_width: 256,
            denoise_widths: vec![256, 96],
            denoise_kernel: 1,
            refine_width: 256,
            refine_hidden: 4,
            omega0: 30.0,
            bn_eps: 1e-5,
        }
    }

    pub fn input_dim(&self) -> usize {
        encoded_dim(self.levels, self.append_raw)
    }

    /// First channel of the `c_in`-wide middle slice of a feature map.
    pub fn central_start(&self) -> usize {
        (self.c_feat - self.c_in) / 2
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.c_in == 0 || self.batch_frames == 0 || self.levels == 0 {
            return bad("c_in, batch_frames and levels must be positive".into());
        }
        if self.c_feat < self.c_in {
            return bad(format!("c_feat {} smaller than c_in {}", self.c_feat, self.c_in));
        }
        if self.feature_width == 0 || self.refine_width == 0 || self.refine_hidden == 0 {
            return bad("layer widths must be positive".into());
        }
        if self.denoise_widths.contains(&0) {
            return bad("denoiser widths must be positive".into());
        }
        if self.denoise_kernel.is_multiple_of(2) {
            return bad(format!("denoiser kernel {} must be odd", self.denoise_kernel));
        }
        if self.omega0.is_nan() || self.omega0 <= 0.0 || self.bn_eps.is_nan() || self.bn_eps <= 0.0 {
            return bad("omega0 and bn_eps must be positive".into());
        }
        Ok(())
    }

    fn feature_layers(&self) -> Vec<(usize, usize, usize)> {
        let w = self.feature_width;
        let mut v = vec![(self.input_dim(), w, 1)];
        v.extend((1..FEATURE_CONVS - 1).map(|_| (w, w, 3)));
        v.push((w, self.c_feat, 3));
        v
    }

    fn denoise_layers(&self) -> Vec<(usize, usize, usize)> {
        let mut v = Vec::new();
        let mut cin = self.batch_frames * self.c_feat;
        for &w in &self.denoise_widths {
            v.push((cin, w, self.denoise_kernel));
            cin = w;
        }
        v.push((cin, self.c_in, 1));
        v
    }

    fn refine_layers(&self) -> Vec<(usize, usize)> {
        let mut v = vec![(COORD_DIMS, self.refine_width)];
        v.extend((1..self.refine_hidden).map(|_| (self.refine_width, self.refine_width)));
        v.push((self.refine_width, self.c_in));
        v
    }

    /// Every parameter name with its shape, in canonical order.
    pub fn expected_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, (cin, cout, k)) in self.feature_layers().into_iter().enumerate() {
            out.push((format!("feature.conv_{i}.weight"), vec![cout, cin, k, k]));
            out.push((format!("feature.conv_{i}.bias"), vec![cout]));
            if i < FEATURE_BN_LAYERS {
                out.push((format!("feature.bn_{i}.gamma"), vec![cout]));
                out.push((format!("feature.bn_{i}.beta"), vec![cout]));
            }
        }
        for (i, (cin, cout, k)) in self.denoise_layers().into_iter().enumerate() {
            out.push((format!("denoise.conv_{i}.weight"), vec![cout, cin, k, k]));
            out.push((format!("denoise.conv_{i}.bias"), vec![cout]));
        }
        for (i, (din, dout)) in self.refine_layers().into_iter().enumerate() {
            out.push((format!("refine.mlp_{i}.weight"), vec![dout, din]));
            out.push((format!("refine.mlp_{i}.bias"), vec![dout]));
        }
        out
    }
}

/// Parameters of all three networks.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    /// θ
    pub feature: ParamSet,
    /// φ
    pub denoise: ParamSet,
    /// η
    pub refine: ParamSet,
}

fn uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>, bound: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-bound..=bound) as f32)
}

/// Deterministic initialization from `seed`.
///
/// Convolutions use `U(±1/√fan_in)`. The SIREN's first layer uses
/// `U(±1/fan_in)` and later layers `U(±√(6/fan_in)/ω0)`. Biases start at 0,
/// batch-norm scales at 1.
pub fn init_params(arch: &Architecture, seed: u64) -> Result<ModelParams> {
    arch.validate()?;
    let stream = |s: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(s);
        r
    };
    let mut feature = ParamSet::new();
    let mut denoise = ParamSet::new();
    let mut refine = ParamSet::new();
    let (mut rf, mut rd, mut rr) = (stream(1), stream(2), stream(3));
    let omega = arch.omega0 as f64;
    for (name, shape) in arch.expected_shapes() {
        let t = if name.ends_with(".bias") || name.ends_with(".beta") {
            Tensor::zeros(shape)
        } else if name.ends_with(".gamma") {
            Tensor::full(shape, 1.0)
        } else if name.starts_with("refine.") {
            let fan_in = shape[1] as f64;
            let bound = if name.starts_with("refine.mlp_0.") {
                1.0 / fan_in
            } else {
                (6.0 / fan_in).sqrt() / omega
            };
            uniform(&mut rr, shape, bound)
        } else {
            let fan_in: usize = shape[1..].iter().product();
            let rng = if name.starts_with("feature.") { &mut rf } else { &mut rd };
            uniform(rng, shape, 1.0 / (fan_in as f64).sqrt())
        };
        let set = match name.split('.').next() {
            Some("feature") => &mut feature,
            Some("denoise") => &mut denoise,
            _ => &mut refine,
        };
        set.insert(name, t);
    }
    Ok(ModelParams {
        arch: arch.clone(),
        feature,
        denoise,
        refine,
    })
}

impl ModelParams {
    /// Checks every parameter against the architecture's shape table.
    pub fn check_shapes(&self) -> Result<()> {
        let expected = self.arch.expected_shapes();
        let actual: Vec<(&str, &Tensor)> = self
            .feature
            .iter()
            .chain(self.denoise.iter())
            .chain(self.refine.iter())
            .collect();
        if expected.len() != actual.len() {
            return Err(Error::Contract(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                actual.len()
            )));
        }
        for ((name, shape), (aname, t)) in expected.iter().zip(&actual) {
            if name != aname || shape.as_slice() != t.shape() {
                return Err(Error::Contract(format!(
                    "parameter {aname} {:?} does not match {name} {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    /// Forward pass without gradients: encoded batch `[B, D, H, W]` to
    /// feature maps `[B, C_feat, H, W]`.
    pub fn feature_maps(&self, encoded: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.feature.bind(&mut g, false);
        let x = g.constant(encoded.clone());
        let f = feature_forward(&mut g, &self.arch, &p, x)?;
        Ok(g.take(f))
    }

    /// Denoised central frame `[1, C_in, H, W]` from an encoded batch.
    pub fn denoise(&self, encoded: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let pf = self.feature.bind(&mut g, false);
        let pd = self.denoise.bind(&mut g, false);
        let x = g.constant(encoded.clone());
        let f = feature_forward(&mut g, &self.arch, &pf, x)?;
        let out = denoise_forward(&mut g, &self.arch, &pd, f)?;
        Ok(g.take(out))
    }

    /// Refined frame `[1, C_in, H, W]` from a coordinate grid (unclipped).
    pub fn refine(&self, grid: &crate::grid::CoordGrid) -> Result<Tensor> {
        let mut g = Graph::new();
        let pr = self.refine.bind(&mut g, false);
        let coords = g.constant(grid.as_rows());
        let out = refine_forward(&mut g, &self.arch, &pr, coords, grid.height(), grid.width())?;
        Ok(g.take(out))
    }
}

fn conv(g: &mut Graph, p: &Bound, name: &str, x: Var) -> Result<Var> {
    let w = p.var(&format!("{name}.weight"))?;
    let b = p.var(&format!("{name}.bias"))?;
    Ok(g.conv2d(x, w, b)?)
}

/// `[B, D, H, W]` encoded grids to `[B, C_feat, H, W]` feature maps.
/// Batch norm follows the first two convolutions; ReLU follows all but the last.
pub fn feature_forward(g: &mut Graph, arch: &Architecture, p: &Bound, input: Var) -> Result<Var> {
    let mut x = input;
    for i in 0..FEATURE_CONVS {
        x = conv(g, p, &format!("feature.conv_{i}"), x)?;
        if i < FEATURE_BN_LAYERS {
            let gamma = p.var(&format!("feature.bn_{i}.gamma"))?;
            let beta = p.var(&format!("feature.bn_{i}.beta"))?;
            x = g.batchnorm2d(x, gamma, beta, arch.bn_eps)?;
        }
        if i + 1 < FEATURE_CONVS {
            x = g.relu(x)?;
        }
    }
    Ok(x)
}

/// Middle `c_in` channels of each feature map, `[B, C_in, H, W]`.
pub fn central_channels(g: &mut Graph, arch: &Architecture, features: Var) -> Result<Var> {
    Ok(g.slice_channels(features, arch.central_start(), arch.c_in)?)
}

/// Concatenates the `B` feature maps along channels and maps them to the
/// denoised central frame `[1, C_in, H, W]` in `(0, 1)`.
pub fn denoise_forward(g: &mut Graph, arch: &Architecture, p: &Bound, features: Var) -> Result<Var> {
    let b = g.value(features).shape()[0];
    let frames = (0..b)
        .map(|i| g.select_frame(features, i))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut x = g.concat_channels(&frames)?;
    let layers = arch.denoise_widths.len() + 1;
    for i in 0..layers {
        x = conv(g, p, &format!("denoise.conv_{i}"), x)?;
        x = if i + 1 < layers { g.relu(x)? } else { g.sigmoid(x)? };
    }
    Ok(x)
}

/// Pointwise SIREN over `[H·W, 3]` raw coordinates, reshaped to `[1, C_in, H, W]`.
pub fn refine_forward(
    g: &mut Graph,
    arch: &Architecture,
    p: &Bound,
    coords: Var,
    height: usize,
    width: usize,
) -> Result<Var> {
    let mut x = coords;
    for i in 0..=arch.refine_hidden {
        let w = p.var(&format!("refine.mlp_{i}.weight"))?;
        let b = p.var(&format!("refine.mlp_{i}.bias"))?;
        x = g.linear(x, w, b)?;
        if i < arch.refine_hidden {
            x = g.sine(x, arch.omega0)?;
        }
    }
    let chw = g.transpose(x)?;
    Ok(g.reshape(chw, &[1, arch.c_in, height, width])?)
}

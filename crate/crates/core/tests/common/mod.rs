//! Shared oracles for the integration and acceptance tests: plain f64
//! forward passes written directly from the formulas, finite differences,
//! direct-formula metrics and the desk fixture.
#![allow(dead_code)]

use std::path::PathBuf;

use cbvd::frames::{load_dir, moving_pattern, FrameSequence};
use cbvd::grid::{encode, make_grid};
use cbvd::networks::{central_channels, denoise_forward, feature_forward, init_params, Architecture};
use cbvd::noise::{corrupt, NoiseSpec};
use cbvd::tensor::{Graph, ParamSet, Tensor, Var};
use cbvd::trainer::TrainConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// f64 tensor used by the reference forwards.
#[derive(Clone, Debug)]
pub struct R {
    pub shape: Vec<usize>,
    pub d: Vec<f64>,
}

impl R {
    pub fn new(shape: &[usize], d: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), d.len());
        Self {
            shape: shape.to_vec(),
            d,
        }
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        Self::new(t.shape(), t.data().iter().map(|&v| v as f64).collect())
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.shape.clone(), self.d.iter().map(|&v| v as f32).collect()).unwrap()
    }

    /// Uniform values in `[lo, hi)`, rounded through f32 so both sides of a
    /// comparison see identical inputs.
    pub fn random(shape: &[usize], lo: f64, hi: f64, r: &mut ChaCha8Rng) -> Self {
        let n = shape.iter().product();
        Self::new(shape, (0..n).map(|_| r.random_range(lo..hi) as f32 as f64).collect())
    }

    /// Like [`R::random`] but with magnitudes at least `margin`.
    pub fn random_away_from_zero(shape: &[usize], margin: f64, hi: f64, r: &mut ChaCha8Rng) -> Self {
        let n = shape.iter().product();
        let d = (0..n)
            .map(|_| {
                let m = r.random_range(margin..hi);
                let s = if r.random::<bool>() { 1.0 } else { -1.0 };
                (s * m) as f32 as f64
            })
            .collect();
        Self::new(shape, d)
    }
}

pub fn conv2d(x: &R, w: &R, b: &R) -> R {
    let (bn, cin, h, wd) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let (cout, k) = (w.shape[0], w.shape[2]);
    let pad = (k / 2) as isize;
    let mut out = vec![0.0; bn * cout * h * wd];
    for n in 0..bn {
        for o in 0..cout {
            for y in 0..h {
                for xx in 0..wd {
                    let mut s = b.d[o];
                    for c in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let sy = y as isize + ky as isize - pad;
                                let sx = xx as isize + kx as isize - pad;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= wd as isize {
                                    continue;
                                }
                                let xi = ((n * cin + c) * h + sy as usize) * wd + sx as usize;
                                let wi = ((o * cin + c) * k + ky) * k + kx;
                                s += x.d[xi] * w.d[wi];
                            }
                        }
                    }
                    out[((n * cout + o) * h + y) * wd + xx] = s;
                }
            }
        }
    }
    R::new(&[bn, cout, h, wd], out)
}

pub fn linear(x: &R, w: &R, b: &R) -> R {
    let (n, din) = (x.shape[0], x.shape[1]);
    let dout = w.shape[0];
    let mut out = vec![0.0; n * dout];
    for i in 0..n {
        for o in 0..dout {
            out[i * dout + o] = b.d[o] + (0..din).map(|j| x.d[i * din + j] * w.d[o * din + j]).sum::<f64>();
        }
    }
    R::new(&[n, dout], out)
}

pub fn map(x: &R, f: impl Fn(f64) -> f64) -> R {
    R::new(&x.shape, x.d.iter().map(|&v| f(v)).collect())
}

pub fn relu(x: &R) -> R {
    map(x, |v| v.max(0.0))
}

pub fn sigmoid(x: &R) -> R {
    map(x, |v| 1.0 / (1.0 + (-v).exp()))
}

pub fn sine(x: &R, omega0: f64) -> R {
    map(x, |v| (omega0 * v).sin())
}

pub fn batchnorm(x: &R, gamma: &R, beta: &R, eps: f64) -> R {
    let (b, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let hw = h * w;
    let m = (b * hw) as f64;
    let mut out = x.d.clone();
    for ch in 0..c {
        let idx: Vec<usize> = (0..b)
            .flat_map(|n| (0..hw).map(move |p| (n * c + ch) * hw + p))
            .collect();
        let mean = idx.iter().map(|&i| x.d[i]).sum::<f64>() / m;
        let var = idx.iter().map(|&i| (x.d[i] - mean).powi(2)).sum::<f64>() / m;
        for &i in &idx {
            out[i] = gamma.d[ch] * (x.d[i] - mean) / (var + eps).sqrt() + beta.d[ch];
        }
    }
    R::new(&x.shape, out)
}

pub fn concat(parts: &[&R]) -> R {
    let (b, h, w) = (parts[0].shape[0], parts[0].shape[2], parts[0].shape[3]);
    let hw = h * w;
    let total: usize = parts.iter().map(|p| p.shape[1]).sum();
    let mut out = Vec::new();
    for n in 0..b {
        for p in parts {
            let c = p.shape[1];
            out.extend_from_slice(&p.d[n * c * hw..(n + 1) * c * hw]);
        }
    }
    R::new(&[b, total, h, w], out)
}

pub fn l1(a: &R, b: &R) -> f64 {
    a.d.iter().zip(&b.d).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.d.len() as f64
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central finite differences of `f` with respect to every entry of
/// `inputs[which]`.
pub fn numeric_grad(f: &dyn Fn(&[R]) -> f64, inputs: &[R], which: usize, eps: f64) -> Vec<f64> {
    let mut xs = inputs.to_vec();
    (0..xs[which].d.len())
        .map(|i| {
            let v = xs[which].d[i];
            xs[which].d[i] = v + eps;
            let up = f(&xs);
            xs[which].d[i] = v - eps;
            let down = f(&xs);
            xs[which].d[i] = v;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Largest elementwise `|analytic − numeric| / max(|numeric|, 1% of the
/// largest numeric magnitude)`.
pub fn max_rel_err(analytic: &[f32], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (0.01 * scale).max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a as f64 - n).abs() / n.abs().max(floor))
        .fold(0.0, f64::max)
}

/// `Σ r ⊙ y` as a graph node, built from reshape + linear.
pub fn project(g: &mut Graph, y: Var, r: &[f64]) -> Var {
    let n = r.len();
    let flat = g.reshape(y, &[1, n]).unwrap();
    let w = g.constant(Tensor::new([1, n], r.iter().map(|&v| v as f32).collect()).unwrap());
    let b = g.constant(Tensor::zeros([1]));
    g.linear(flat, w, b).unwrap()
}

/// Finite-difference check of one primitive. `build` applies the library op
/// to the leaves, `reference` the f64 formula. The loss is a fixed random
/// projection of the output unless the op is already scalar.
pub fn check_primitive(
    inputs: Vec<R>,
    grad_inputs: &[usize],
    build: &dyn Fn(&mut Graph, &[Var]) -> Var,
    reference: &dyn Fn(&[R]) -> R,
    seed: u64,
) -> f64 {
    let out_len = reference(&inputs).d.len();
    let mut r = rng(seed ^ 0x5eed);
    let proj: Vec<f64> = if out_len == 1 {
        vec![1.0]
    } else {
        (0..out_len).map(|_| r.random_range(-1.0..1.0) as f32 as f64).collect()
    };

    let mut g = Graph::new();
    let leaves: Vec<Var> = inputs
        .iter()
        .enumerate()
        .map(|(i, x)| g.leaf(x.to_tensor().with_requires_grad(grad_inputs.contains(&i))))
        .collect();
    let y = build(&mut g, &leaves);
    let loss = if out_len == 1 { y } else { project(&mut g, y, &proj) };
    g.backward(loss).unwrap();

    let f = |xs: &[R]| dot(&reference(xs).d, &proj);
    grad_inputs
        .iter()
        .map(|&i| {
            let numeric = numeric_grad(&f, &inputs, i, 1e-6);
            max_rel_err(g.grad(leaves[i]).expect("leaf gradient"), &numeric)
        })
        .fold(0.0, f64::max)
}

/// `(name, max relative error)` for every primitive, with randomized inputs.
pub fn primitive_gradient_errors(seed: u64) -> Vec<(String, f64)> {
    let mut r = rng(seed);
    let mut out = Vec::new();

    for k in [1usize, 3] {
        let x = R::random(&[2, 3, 5, 4], -1.0, 1.0, &mut r);
        let w = R::random(&[4, 3, k, k], -0.5, 0.5, &mut r);
        let b = R::random(&[4], -0.5, 0.5, &mut r);
        let e = check_primitive(
            vec![x, w, b],
            &[0, 1, 2],
            &|g, v| g.conv2d(v[0], v[1], v[2]).unwrap(),
            &|x| conv2d(&x[0], &x[1], &x[2]),
            seed + k as u64,
        );
        out.push((format!("conv2d k={k}"), e));
    }

    let x = R::random(&[6, 4], -1.0, 1.0, &mut r);
    let w = R::random(&[3, 4], -1.0, 1.0, &mut r);
    let b = R::random(&[3], -1.0, 1.0, &mut r);
    out.push((
        "linear".into(),
        check_primitive(
            vec![x, w, b],
            &[0, 1, 2],
            &|g, v| g.linear(v[0], v[1], v[2]).unwrap(),
            &|x| linear(&x[0], &x[1], &x[2]),
            seed + 10,
        ),
    ));

    let x = R::random_away_from_zero(&[5, 8], 0.05, 2.0, &mut r);
    out.push((
        "relu".into(),
        check_primitive(
            vec![x],
            &[0],
            &|g, v| g.relu(v[0]).unwrap(),
            &|x| relu(&x[0]),
            seed + 11,
        ),
    ));

    let x = R::random(&[5, 8], -4.0, 4.0, &mut r);
    out.push((
        "sigmoid".into(),
        check_primitive(
            vec![x],
            &[0],
            &|g, v| g.sigmoid(v[0]).unwrap(),
            &|x| sigmoid(&x[0]),
            seed + 12,
        ),
    ));

    let x = R::random(&[5, 8], -0.2, 0.2, &mut r);
    out.push((
        "sine".into(),
        check_primitive(
            vec![x],
            &[0],
            &|g, v| g.sine(v[0], 30.0).unwrap(),
            &|x| sine(&x[0], 30.0),
            seed + 13,
        ),
    ));

    let x = R::random(&[3, 4, 3, 3], -1.0, 1.0, &mut r);
    let gamma = R::random(&[4], 0.5, 1.5, &mut r);
    let beta = R::random(&[4], -0.5, 0.5, &mut r);
    out.push((
        "batchnorm2d".into(),
        check_primitive(
            vec![x, gamma, beta],
            &[0, 1, 2],
            &|g, v| g.batchnorm2d(v[0], v[1], v[2], 1e-5).unwrap(),
            &|x| batchnorm(&x[0], &x[1], &x[2], 1e-5),
            seed + 14,
        ),
    ));

    let a = R::random(&[2, 2, 3, 3], -1.0, 1.0, &mut r);
    let b = R::random(&[2, 3, 3, 3], -1.0, 1.0, &mut r);
    out.push((
        "concat".into(),
        check_primitive(
            vec![a, b],
            &[0, 1],
            &|g, v| g.concat_channels(&[v[0], v[1]]).unwrap(),
            &|x| concat(&[&x[0], &x[1]]),
            seed + 15,
        ),
    ));

    let a = R::random(&[30], 0.0, 1.0, &mut r);
    let offset = R::random_away_from_zero(&[30], 0.05, 0.5, &mut r);
    let b = R::new(
        &[30],
        a.d.iter().zip(&offset.d).map(|(x, o)| (x + o) as f32 as f64).collect(),
    );
    out.push((
        "l1_loss".into(),
        check_primitive(
            vec![a, b],
            &[0, 1],
            &|g, v| g.l1_loss(v[0], v[1]).unwrap(),
            &|x| R::new(&[1], vec![l1(&x[0], &x[1])]),
            seed + 16,
        ),
    ));
    out
}

pub fn toy_arch() -> Architecture {
    Architecture {
        c_in: 3,
        c_feat: 6,
        batch_frames: 2,
        levels: 2,
        feature_width: 4,
        denoise_widths: vec![5],
        refine_width: 8,
        refine_hidden: 2,
        ..Architecture::default()
    }
}

fn param_r(set: &ParamSet, name: &str) -> R {
    R::from_tensor(set.get(name).unwrap_or_else(|| panic!("missing {name}")))
}

/// f64 stage-1 loss from explicit parameter tensors (`names[i]` ↔ `values[i]`).
fn reference_stage1(
    arch: &Architecture,
    names: &[String],
    values: &[R],
    x: &R,
    noisy: &R,
    center: &R,
    lambda1: f64,
) -> f64 {
    let get = |n: &str| &values[names.iter().position(|m| m == n).unwrap()];
    let mut h = x.clone();
    for i in 0..6 {
        h = conv2d(
            &h,
            get(&format!("feature.conv_{i}.weight")),
            get(&format!("feature.conv_{i}.bias")),
        );
        if i < 2 {
            h = batchnorm(
                &h,
                get(&format!("feature.bn_{i}.gamma")),
                get(&format!("feature.bn_{i}.beta")),
                arch.bn_eps as f64,
            );
        }
        if i < 5 {
            h = relu(&h);
        }
    }
    let (b, cf, hh, ww) = (h.shape[0], h.shape[1], h.shape[2], h.shape[3]);
    let hw = hh * ww;
    let start = (cf - arch.c_in) / 2;
    let mut central = Vec::new();
    for n in 0..b {
        central.extend_from_slice(&h.d[(n * cf + start) * hw..(n * cf + start + arch.c_in) * hw]);
    }
    let central = R::new(&[b, arch.c_in, hh, ww], central);
    let frames: Vec<R> = (0..b)
        .map(|n| R::new(&[1, cf, hh, ww], h.d[n * cf * hw..(n + 1) * cf * hw].to_vec()))
        .collect();
    let mut d = concat(&frames.iter().collect::<Vec<_>>());
    let layers = arch.denoise_widths.len() + 1;
    for i in 0..layers {
        d = conv2d(
            &d,
            get(&format!("denoise.conv_{i}.weight")),
            get(&format!("denoise.conv_{i}.bias")),
        );
        d = if i + 1 < layers { relu(&d) } else { sigmoid(&d) };
    }
    l1(&d, center) + lambda1 * l1(&central, noisy)
}

/// Finite-difference check of the full stage-1 loss (feature generator,
/// central slice, denoiser, both loss terms) on a 2-frame 8×8 toy, over
/// every parameter. Returns the largest relative error.
pub fn composed_stage1_error(seed: u64) -> f64 {
    let arch = toy_arch();
    let params = init_params(&arch, seed).unwrap();
    let mut r = rng(seed + 100);
    let (h, w) = (8, 8);
    let enc: Vec<Tensor> = (0..2)
        .map(|t| {
            encode(&make_grid(h, w, t, 2).unwrap(), arch.levels, false)
                .unwrap()
                .channels_first()
        })
        .collect();
    let x = Tensor::stack(&enc.iter().collect::<Vec<_>>()).unwrap();
    let noisy = R::random(&[2, 3, h, w], 0.0, 1.0, &mut r);
    let center = R::new(&[1, 3, h, w], noisy.d[..3 * h * w].to_vec());
    let lambda1 = 0.7;

    let mut g = Graph::new();
    let joint: ParamSet = params
        .feature
        .iter()
        .chain(params.denoise.iter())
        .map(|(n, t)| (n.to_owned(), t.clone()))
        .collect();
    let bound = joint.bind(&mut g, true);
    let xv = g.constant(x.clone());
    let f = feature_forward(&mut g, &arch, &bound, xv).unwrap();
    let out = denoise_forward(&mut g, &arch, &bound, f).unwrap();
    let fc = central_channels(&mut g, &arch, f).unwrap();
    let nv = g.constant(noisy.to_tensor());
    let cv = g.constant(center.to_tensor());
    let loss = cbvd::trainer::stage1_loss(&mut g, out, cv, fc, nv, lambda1 as f32).unwrap();
    g.backward(loss).unwrap();
    let mut grads = joint.clone();
    grads.accumulate_grads(&g, &bound).unwrap();

    let names: Vec<String> = joint.names().map(str::to_owned).collect();
    let values: Vec<R> = names.iter().map(|n| param_r(&joint, n)).collect();
    let xr = R::from_tensor(&x);
    let f = |vals: &[R]| reference_stage1(&arch, &names, vals, &xr, &noisy, &center, lambda1);
    let analytic: Vec<f32> = names
        .iter()
        .flat_map(|n| grads.get(n).unwrap().grad().unwrap().to_vec())
        .collect();
    let numeric: Vec<f64> = (0..names.len())
        .flat_map(|i| numeric_grad(&f, &values, i, 1e-6))
        .collect();
    max_rel_err(&analytic, &numeric)
}

/// PSNR straight from the definition, data range 1, cap 99.
pub fn direct_psnr(a: &Tensor, b: &Tensor) -> f64 {
    let n = a.numel() as f64;
    let mut se = 0.0;
    for i in 0..a.numel() {
        let d = a.data()[i] as f64 - b.data()[i] as f64;
        se += d * d;
    }
    let mse = se / n;
    if mse == 0.0 {
        99.0
    } else {
        (10.0 * (1.0 / mse).log10()).min(99.0)
    }
}

/// SSIM with a directly evaluated 2-D Gaussian window over every valid
/// position; no separable filtering.
pub fn direct_ssim(a: &Tensor, b: &Tensor) -> f64 {
    let (c, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    let k = 11usize;
    let sigma = 1.5f64;
    let mut win = vec![0.0f64; k * k];
    for y in 0..k {
        for x in 0..k {
            let (dy, dx) = (y as f64 - 5.0, x as f64 - 5.0);
            win[y * k + x] = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
        }
    }
    let total: f64 = win.iter().sum();
    win.iter_mut().for_each(|v| *v /= total);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut acc = 0.0;
    for ch in 0..c {
        let at = |t: &Tensor, y: usize, x: usize| t.data()[(ch * h + y) * w + x] as f64;
        let mut s = 0.0;
        let mut count = 0usize;
        for y0 in 0..=h - k {
            for x0 in 0..=w - k {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..k {
                    for dx in 0..k {
                        let wt = win[dy * k + dx];
                        let (va, vb) = (at(a, y0 + dy, x0 + dx), at(b, y0 + dy, x0 + dx));
                        ma += wt * va;
                        mb += wt * vb;
                        saa += wt * va * va;
                        sbb += wt * vb * vb;
                        sab += wt * va * vb;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                s += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        acc += s / count as f64;
    }
    acc / c as f64
}

pub fn random_frame(shape: [usize; 3], r: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| r.random::<f32>())
}

/// A clean frame and a noisy version of it, both in `[0, 1]`.
pub fn random_pair(r: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> (Tensor, Tensor) {
    let a = Tensor::from_fn([c, h, w], |i| {
        let (y, x) = ((i / w) % h, i % w);
        (0.5 + 0.3 * ((x as f32) * 0.2).sin() * ((y as f32) * 0.15).cos()).clamp(0.0, 1.0)
    });
    let sigma = r.random_range(0.01f32..0.2);
    let data = a
        .data()
        .iter()
        .map(|&v| (v + sigma * (r.random::<f32>() * 2.0 - 1.0)).clamp(0.0, 1.0))
        .collect();
    (a.clone(), Tensor::new([c, h, w], data).unwrap())
}

pub fn fixture_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/desk")
}

/// The committed desk clip with its frozen σ = 25 Gaussian copy.
pub fn desk_fixture() -> FrameSequence {
    let root = fixture_root();
    let noisy = load_dir(&root.join("noisy_g25")).expect("noisy fixture");
    let clean = load_dir(&root.join("clean")).expect("clean fixture");
    noisy.with_clean(clean.into_frames()).unwrap()
}

/// A few-second model on a 16×16 clip.
pub fn tiny_config() -> TrainConfig {
    TrainConfig {
        levels: 6,
        feature_width: 8,
        denoise_widths: vec![16, 8],
        refine_width: 16,
        refine_hidden: 2,
        lr1: 1e-3,
        lr2: 1e-4,
        epochs_stage1: 4,
        epochs_stage2: 4,
        ..TrainConfig::default()
    }
}

/// Five noisy 16×16 frames with their clean copies.
pub fn tiny_sequence(seed: u64) -> FrameSequence {
    let clean = moving_pattern(5, 16, 16, 3).unwrap();
    corrupt(&clean, &NoiseSpec::gaussian(25.0, seed)).unwrap()
}

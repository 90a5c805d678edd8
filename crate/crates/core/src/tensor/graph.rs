use super::gemm::{col2im_add, im2col, matmul, View};
use super::{shape_err, Result, Tensor, TensorError};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    Sigmoid,
    /// `sin(omega0 · x)`
    Sine {
        omega0: f32,
    },
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        k: usize,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Act {
        input: Var,
        kind: Activation,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f32>,
        inv_std: Vec<f32>,
    },
    Concat {
        inputs: Vec<Var>,
    },
    SelectFrame {
        input: Var,
        index: usize,
    },
    SliceChannels {
        input: Var,
        start: usize,
    },
    L1 {
        a: Var,
        b: Var,
    },
    Sum {
        input: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        input: Var,
        factor: f32,
    },
    Transpose {
        input: Var,
    },
    Reshape {
        input: Var,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only tape. Nodes are recorded in evaluation order, so reverse
/// insertion order is a valid reverse topological order for backprop.
///
/// Leaf gradients persist on the leaf tensors and accumulate across repeated
/// [`Graph::backward`] calls.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    validate: bool,
}

fn dims4(t: &Tensor, op: &'static str) -> Result<[usize; 4]> {
    match *t.shape() {
        [a, b, c, d] => Ok([a, b, c, d]),
        ref s => shape_err(op, format!("expected rank-4 tensor, got {s:?}")),
    }
}

fn dims2(t: &Tensor, op: &'static str) -> Result<[usize; 2]> {
    match *t.shape() {
        [a, b] => Ok([a, b]),
        ref s => shape_err(op, format!("expected rank-2 tensor, got {s:?}")),
    }
}

fn add_into(dst: &mut [f32], src: &[f32]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// In validation mode every op output and every backpropagated gradient is
    /// checked for NaN/Inf and reported as [`TensorError::NonFinite`].
    pub fn with_validation(mut self, on: bool) -> Self {
        self.validate = on;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf; it receives gradients iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let requires_grad = t.requires_grad();
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf that never receives gradients.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f32]> {
        self.nodes[v.0].value.grad()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> f32 {
        self.nodes[v.0].value.data()[0]
    }

    /// Removes a tensor from the graph, leaving an empty placeholder. Only
    /// intended for harvesting leaves once the graph is no longer needed.
    pub fn take(&mut self, v: Var) -> Tensor {
        std::mem::replace(&mut self.nodes[v.0].value, Tensor::scalar(0.0))
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var], name: &'static str) -> Result<Var> {
        if self.validate && !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Same-size 2-D convolution (stride 1, zero padding `(k-1)/2`) for odd `k`.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let [b, cin, h, w] = dims4(self.value(input), "conv2d")?;
        let [cout, wcin, k, k2] = dims4(self.value(weight), "conv2d")?;
        if wcin != cin {
            return shape_err("conv2d", format!("input has {cin} channels, weight expects {wcin}"));
        }
        if k != k2 || k % 2 == 0 {
            return shape_err("conv2d", format!("kernel {k}x{k2} is not square and odd"));
        }
        if self.value(bias).shape() != [cout] {
            return shape_err(
                "conv2d",
                format!("bias {:?} for {cout} output channels", self.value(bias).shape()),
            );
        }
        let hw = h * w;
        let patch = cin * k * k;
        let x = self.value(input).data();
        let wt = self.value(weight).data();
        let bs = self.value(bias).data();
        let mut out = vec![0.0f32; b * cout * hw];
        let mut cols = if k == 1 { Vec::new() } else { vec![0.0; patch * hw] };
        for n in 0..b {
            let xb = &x[n * cin * hw..(n + 1) * cin * hw];
            let ob = &mut out[n * cout * hw..(n + 1) * cout * hw];
            for (c, row) in ob.chunks_exact_mut(hw).enumerate() {
                row.iter_mut().for_each(|v| *v = bs[c]);
            }
            let src: &[f32] = if k == 1 {
                xb
            } else {
                im2col(xb, cin, h, w, k, &mut cols);
                &cols
            };
            matmul(View::new(wt, cout, patch), View::new(src, patch, hw), ob, 1.0);
        }
        let value = Tensor::new([b, cout, h, w], out)?;
        self.push(
            value,
            Op::Conv2d { input, weight, bias, k },
            &[input, weight, bias],
            "conv2d",
        )
    }

    /// Row-wise affine map `x · Wᵀ + b` with `W` stored as `[out, in]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let [n, din] = dims2(self.value(input), "linear")?;
        let [dout, wdin] = dims2(self.value(weight), "linear")?;
        if din != wdin {
            return shape_err("linear", format!("input width {din}, weight expects {wdin}"));
        }
        if self.value(bias).shape() != [dout] {
            return shape_err(
                "linear",
                format!("bias {:?} for {dout} outputs", self.value(bias).shape()),
            );
        }
        let bs = self.value(bias).data();
        let mut out: Vec<f32> = (0..n).flat_map(|_| bs.iter().copied()).collect();
        matmul(
            View::new(self.value(input).data(), n, din),
            View::new(self.value(weight).data(), dout, din).t(),
            &mut out,
            1.0,
        );
        let value = Tensor::new([n, dout], out)?;
        self.push(
            value,
            Op::Linear { input, weight, bias },
            &[input, weight, bias],
            "linear",
        )
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Result<Var> {
        let x = self.value(input);
        let data: Vec<f32> = match kind {
            // NaN passes through so validation can see it
            Activation::Relu => x.data().iter().map(|&v| if v < 0.0 { 0.0 } else { v }).collect(),
            Activation::Sigmoid => x.data().iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect(),
            Activation::Sine { omega0 } => {
                if omega0.is_nan() || omega0 <= 0.0 {
                    return Err(TensorError::Contract(format!(
                        "sine frequency must be positive, got {omega0}"
                    )));
                }
                x.data().iter().map(|&v| (omega0 * v).sin()).collect()
            }
        };
        let value = Tensor::new(x.shape().to_vec(), data)?;
        self.push(value, Op::Act { input, kind }, &[input], "activation")
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        self.activation(input, Activation::Relu)
    }

    pub fn sigmoid(&mut self, input: Var) -> Result<Var> {
        self.activation(input, Activation::Sigmoid)
    }

    pub fn sine(&mut self, input: Var, omega0: f32) -> Result<Var> {
        self.activation(input, Activation::Sine { omega0 })
    }

    /// Training-mode batch normalization: statistics over batch and spatial
    /// axes per channel, biased variance.
    pub fn batchnorm2d(&mut self, input: Var, gamma: Var, beta: Var, eps: f32) -> Result<Var> {
        let [b, c, h, w] = dims4(self.value(input), "batchnorm2d")?;
        for p in [gamma, beta] {
            if self.value(p).shape() != [c] {
                return shape_err(
                    "batchnorm2d",
                    format!("affine parameter {:?} for {c} channels", self.value(p).shape()),
                );
            }
        }
        let hw = h * w;
        let m = (b * hw) as f64;
        let x = self.value(input).data();
        let g = self.value(gamma).data();
        let be = self.value(beta).data();
        let mut xhat = vec![0.0f32; x.len()];
        let mut out = vec![0.0f32; x.len()];
        let mut inv_std = vec![0.0f32; c];
        for ch in 0..c {
            let planes = || (0..b).map(move |n| (n * c + ch) * hw);
            let mut sum = 0.0f64;
            for off in planes() {
                sum += x[off..off + hw].iter().map(|&v| v as f64).sum::<f64>();
            }
            let mean = sum / m;
            let mut sq = 0.0f64;
            for off in planes() {
                sq += x[off..off + hw].iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>();
            }
            let istd = 1.0 / (sq / m + eps as f64).sqrt();
            inv_std[ch] = istd as f32;
            for off in planes() {
                for i in off..off + hw {
                    let xh = ((x[i] as f64 - mean) * istd) as f32;
                    xhat[i] = xh;
                    out[i] = g[ch] * xh + be[ch];
                }
            }
        }
        let value = Tensor::new([b, c, h, w], out)?;
        self.push(
            value,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[input, gamma, beta],
            "batchnorm2d",
        )
    }

    /// Concatenates `[B, Ci, H, W]` tensors along the channel axis.
    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var> {
        let Some(&first) = inputs.first() else {
            return Err(TensorError::Contract("concat of zero tensors".into()));
        };
        let [b, _, h, w] = dims4(self.value(first), "concat_channels")?;
        let mut total = 0;
        for &v in inputs {
            let [vb, vc, vh, vw] = dims4(self.value(v), "concat_channels")?;
            if (vb, vh, vw) != (b, h, w) {
                return shape_err(
                    "concat_channels",
                    format!(
                        "{:?} does not match batch/spatial {:?}",
                        self.value(v).shape(),
                        [b, h, w]
                    ),
                );
            }
            total += vc;
        }
        let hw = h * w;
        let mut out = Vec::with_capacity(b * total * hw);
        for n in 0..b {
            for &v in inputs {
                let t = self.value(v);
                let ci = t.shape()[1];
                out.extend_from_slice(&t.data()[n * ci * hw..(n + 1) * ci * hw]);
            }
        }
        let value = Tensor::new([b, total, h, w], out)?;
        self.push(
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
            },
            inputs,
            "concat_channels",
        )
    }

    /// `[B, C, H, W]` → `[1, C, H, W]` holding frame `index`.
    pub fn select_frame(&mut self, input: Var, index: usize) -> Result<Var> {
        let [b, c, h, w] = dims4(self.value(input), "select_frame")?;
        if index >= b {
            return shape_err("select_frame", format!("frame {index} of {b}"));
        }
        let n = c * h * w;
        let data = self.value(input).data()[index * n..(index + 1) * n].to_vec();
        let value = Tensor::new([1, c, h, w], data)?;
        self.push(value, Op::SelectFrame { input, index }, &[input], "select_frame")
    }

    /// `[B, C, H, W]` → `[B, len, H, W]` keeping channels `start..start+len`.
    pub fn slice_channels(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let [b, c, h, w] = dims4(self.value(input), "slice_channels")?;
        if len == 0 || start + len > c {
            return shape_err("slice_channels", format!("channels {start}..{} of {c}", start + len));
        }
        let hw = h * w;
        let x = self.value(input).data();
        let mut out = Vec::with_capacity(b * len * hw);
        for n in 0..b {
            let off = (n * c + start) * hw;
            out.extend_from_slice(&x[off..off + len * hw]);
        }
        let value = Tensor::new([b, len, h, w], out)?;
        self.push(value, Op::SliceChannels { input, start }, &[input], "slice_channels")
    }

    /// Mean absolute difference. The subgradient of `|0|` is taken as 0.
    pub fn l1_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return shape_err("l1_loss", format!("{:?} vs {:?}", ta.shape(), tb.shape()));
        }
        let s: f64 = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| (x - y).abs() as f64)
            .sum();
        let value = Tensor::scalar((s / ta.numel() as f64) as f32);
        self.push(value, Op::L1 { a, b }, &[a, b], "l1_loss")
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(input).sum() as f32);
        self.push(value, Op::Sum { input }, &[input], "sum")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return shape_err("add", format!("{:?} vs {:?}", ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(value, Op::Add { a, b }, &[a, b], "add")
    }

    pub fn scale(&mut self, input: Var, factor: f32) -> Result<Var> {
        let t = self.value(input);
        let data = t.data().iter().map(|v| v * factor).collect();
        let value = Tensor::new(t.shape().to_vec(), data)?;
        self.push(value, Op::Scale { input, factor }, &[input], "scale")
    }

    /// Rank-2 transpose.
    pub fn transpose(&mut self, input: Var) -> Result<Var> {
        let [r, c] = dims2(self.value(input), "transpose")?;
        let x = self.value(input).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = x[i * c + j];
            }
        }
        let value = Tensor::new([c, r], out)?;
        self.push(value, Op::Transpose { input }, &[input], "transpose")
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(input).clone().reshape(shape.to_vec())?;
        let mut value = value;
        value.clear_grad();
        self.push(value, Op::Reshape { input }, &[input], "reshape")
    }

    /// Reverse pass from a single-element `loss`. Gradients of leaves that
    /// require them are added to the leaves' gradient buffers.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; loss.0 + 1];
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if self.validate && g.iter().any(|v| !v.is_finite()) {
                return Err(TensorError::NonFinite { op: "backward" });
            }
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.backprop_node(i, &g, &mut grads);
        }

        for (i, g) in grads.into_iter().enumerate() {
            let node = &mut self.nodes[i];
            if let (Op::Leaf, true, Some(g)) = (&node.op, node.requires_grad, g) {
                node.value.accumulate_grad(&g)?;
            }
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| &nodes[v.0].value;
        // Parents may repeat (e.g. `add(a, a)`), so each update takes the
        // buffer out of its slot and puts it back before the next one.
        let with = |grads: &mut [Option<Vec<f32>>], v: Var, f: &mut dyn FnMut(&mut [f32])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let n = nodes[v.0].value.numel();
            let mut b = grads[v.0].take().unwrap_or_else(|| vec![0.0; n]);
            f(&mut b);
            grads[v.0] = Some(b);
        };

        match &nodes[i].op {
            Op::Leaf => {}
            Op::Conv2d { input, weight, bias, k } => {
                let k = *k;
                let [b, cin, h, w] = dims4(val(*input), "conv2d").expect("checked in forward");
                let cout = val(*weight).shape()[0];
                let hw = h * w;
                let patch = cin * k * k;
                let x = val(*input).data();
                let wt = val(*weight).data();
                with(grads, *bias, &mut |db| {
                    for n in 0..b {
                        for (c, d) in db.iter_mut().enumerate() {
                            let off = (n * cout + c) * hw;
                            *d += g[off..off + hw].iter().sum::<f32>();
                        }
                    }
                });
                let mut cols = if k == 1 { Vec::new() } else { vec![0.0; patch * hw] };
                with(grads, *weight, &mut |dw| {
                    for n in 0..b {
                        let gb = &g[n * cout * hw..(n + 1) * cout * hw];
                        let xb = &x[n * cin * hw..(n + 1) * cin * hw];
                        let src: &[f32] = if k == 1 {
                            xb
                        } else {
                            im2col(xb, cin, h, w, k, &mut cols);
                            &cols
                        };
                        matmul(View::new(gb, cout, hw), View::new(src, patch, hw).t(), dw, 1.0);
                    }
                });
                let mut dcols = cols;
                with(grads, *input, &mut |dx| {
                    for n in 0..b {
                        let gb = &g[n * cout * hw..(n + 1) * cout * hw];
                        let dxb = &mut dx[n * cin * hw..(n + 1) * cin * hw];
                        if k == 1 {
                            matmul(View::new(wt, cout, cin).t(), View::new(gb, cout, hw), dxb, 1.0);
                        } else {
                            matmul(View::new(wt, cout, patch).t(), View::new(gb, cout, hw), &mut dcols, 0.0);
                            col2im_add(&dcols, cin, h, w, k, dxb);
                        }
                    }
                });
            }
            Op::Linear { input, weight, bias } => {
                let [n, din] = dims2(val(*input), "linear").expect("checked in forward");
                let dout = val(*weight).shape()[0];
                with(grads, *bias, &mut |db| {
                    for row in g.chunks_exact(dout) {
                        add_into(db, row);
                    }
                });
                with(grads, *weight, &mut |dw| {
                    matmul(
                        View::new(g, n, dout).t(),
                        View::new(val(*input).data(), n, din),
                        dw,
                        1.0,
                    );
                });
                with(grads, *input, &mut |dx| {
                    matmul(
                        View::new(g, n, dout),
                        View::new(val(*weight).data(), dout, din),
                        dx,
                        1.0,
                    );
                });
            }
            Op::Act { input, kind } => {
                let x = val(*input).data();
                let y = nodes[i].value.data();
                with(grads, *input, &mut |dx| match *kind {
                    Activation::Relu => {
                        for ((d, &gi), &xi) in dx.iter_mut().zip(g).zip(x) {
                            if xi > 0.0 {
                                *d += gi;
                            }
                        }
                    }
                    Activation::Sigmoid => {
                        for ((d, &gi), &yi) in dx.iter_mut().zip(g).zip(y) {
                            *d += gi * yi * (1.0 - yi);
                        }
                    }
                    Activation::Sine { omega0 } => {
                        for ((d, &gi), &xi) in dx.iter_mut().zip(g).zip(x) {
                            *d += gi * omega0 * (omega0 * xi).cos();
                        }
                    }
                });
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let [b, c, h, w] = dims4(val(*input), "batchnorm2d").expect("checked in forward");
                let hw = h * w;
                let m = (b * hw) as f64;
                let gam = val(*gamma).data();
                let mut sum_g = vec![0.0f64; c];
                let mut sum_gx = vec![0.0f64; c];
                for ch in 0..c {
                    for n in 0..b {
                        let off = (n * c + ch) * hw;
                        for j in off..off + hw {
                            sum_g[ch] += g[j] as f64;
                            sum_gx[ch] += (g[j] * xhat[j]) as f64;
                        }
                    }
                }
                with(grads, *gamma, &mut |dg| {
                    dg.iter_mut().zip(&sum_gx).for_each(|(d, s)| *d += *s as f32);
                });
                with(grads, *beta, &mut |db| {
                    db.iter_mut().zip(&sum_g).for_each(|(d, s)| *d += *s as f32);
                });
                with(grads, *input, &mut |dx| {
                    for ch in 0..c {
                        let scale = gam[ch] as f64 * inv_std[ch] as f64 / m;
                        for n in 0..b {
                            let off = (n * c + ch) * hw;
                            for j in off..off + hw {
                                let v = m * g[j] as f64 - sum_g[ch] - xhat[j] as f64 * sum_gx[ch];
                                dx[j] += (scale * v) as f32;
                            }
                        }
                    }
                });
            }
            Op::Concat { inputs } => {
                let [b, total, h, w] = dims4(&nodes[i].value, "concat").expect("rank 4");
                let hw = h * w;
                let mut offset = 0;
                for &v in inputs {
                    let ci = val(v).shape()[1];
                    with(grads, v, &mut |dx| {
                        for n in 0..b {
                            let src = (n * total + offset) * hw;
                            add_into(&mut dx[n * ci * hw..(n + 1) * ci * hw], &g[src..src + ci * hw]);
                        }
                    });
                    offset += ci;
                }
            }
            Op::SelectFrame { input, index } => {
                let n = g.len();
                with(grads, *input, &mut |dx| {
                    add_into(&mut dx[index * n..(index + 1) * n], g);
                });
            }
            Op::SliceChannels { input, start } => {
                let [b, c, h, w] = dims4(val(*input), "slice").expect("rank 4");
                let len = nodes[i].value.shape()[1];
                let hw = h * w;
                with(grads, *input, &mut |dx| {
                    for n in 0..b {
                        let dst = (n * c + start) * hw;
                        add_into(&mut dx[dst..dst + len * hw], &g[n * len * hw..(n + 1) * len * hw]);
                    }
                });
            }
            Op::L1 { a, b } => {
                let (ta, tb) = (val(*a).data(), val(*b).data());
                let scale = g[0] / ta.len() as f32;
                let sign = |x: f32, y: f32| {
                    let d = x - y;
                    if d > 0.0 {
                        1.0
                    } else if d < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                };
                with(grads, *a, &mut |da| {
                    for ((d, &x), &y) in da.iter_mut().zip(ta).zip(tb) {
                        *d += scale * sign(x, y);
                    }
                });
                with(grads, *b, &mut |db| {
                    for ((d, &x), &y) in db.iter_mut().zip(ta).zip(tb) {
                        *d -= scale * sign(x, y);
                    }
                });
            }
            Op::Sum { input } => {
                with(grads, *input, &mut |dx| dx.iter_mut().for_each(|d| *d += g[0]));
            }
            Op::Add { a, b } => {
                with(grads, *a, &mut |da| add_into(da, g));
                with(grads, *b, &mut |db| add_into(db, g));
            }
            Op::Scale { input, factor } => {
                with(grads, *input, &mut |dx| {
                    dx.iter_mut().zip(g).for_each(|(d, gi)| *d += gi * factor);
                });
            }
            Op::Transpose { input } => {
                let [r, c] = dims2(val(*input), "transpose").expect("rank 2");
                with(grads, *input, &mut |dx| {
                    for i in 0..r {
                        for j in 0..c {
                            dx[i * c + j] += g[j * r + i];
                        }
                    }
                });
            }
            Op::Reshape { input } => {
                with(grads, *input, &mut |dx| add_into(dx, g));
            }
        }
    }
}

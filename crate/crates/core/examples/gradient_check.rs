//! Compares the tape's gradients with central finite differences on a small
//! conv → batch norm → ReLU → conv → sigmoid stack.

use cbvd::tensor::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss(params: &[Tensor], x: &Tensor, target: &Tensor) -> (f32, Vec<Vec<f32>>) {
    let mut g = Graph::new();
    let p: Vec<_> = params
        .iter()
        .map(|t| g.leaf(t.clone().with_requires_grad(true)))
        .collect();
    let xv = g.constant(x.clone());
    let tv = g.constant(target.clone());
    let h = g.conv2d(xv, p[0], p[1]).unwrap();
    let h = g.batchnorm2d(h, p[2], p[3], 1e-5).unwrap();
    let h = g.relu(h).unwrap();
    let h = g.conv2d(h, p[4], p[5]).unwrap();
    let y = g.sigmoid(h).unwrap();
    let l = g.l1_loss(y, tv).unwrap();
    g.backward(l).unwrap();
    let grads = p.iter().map(|&v| g.grad(v).unwrap().to_vec()).collect();
    (g.scalar(l), grads)
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut rand = |shape: &[usize], s: f32| Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-s..s));
    let x = rand(&[2, 3, 6, 6], 1.0);
    let target = rand(&[2, 2, 6, 6], 0.5);
    let mut params = vec![
        rand(&[4, 3, 3, 3], 0.4),
        rand(&[4], 0.1),
        Tensor::full([4], 1.0),
        Tensor::zeros([4]),
        rand(&[2, 4, 1, 1], 0.5),
        rand(&[2], 0.1),
    ];
    let names = [
        "conv_a.weight",
        "conv_a.bias",
        "bn.gamma",
        "bn.beta",
        "conv_b.weight",
        "conv_b.bias",
    ];

    let (l0, grads) = loss(&params, &x, &target);
    println!("loss {l0:.6}");
    let eps = 1e-3f32;
    for (pi, name) in names.iter().enumerate() {
        let mut worst = 0.0f32;
        for (i, &analytic) in grads[pi].iter().enumerate().take(12) {
            let orig = params[pi].data()[i];
            params[pi].data_mut()[i] = orig + eps;
            let up = loss(&params, &x, &target).0;
            params[pi].data_mut()[i] = orig - eps;
            let down = loss(&params, &x, &target).0;
            params[pi].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max((numeric - analytic).abs());
        }
        println!("{name:<14} max |analytic - numeric| = {worst:.2e}");
    }
}

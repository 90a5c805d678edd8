mod common;

use common::{composed_stage1_error, primitive_gradient_errors};

#[test]
fn every_primitive_matches_finite_differences() {
    for seed in [1, 2, 3] {
        for (name, err) in primitive_gradient_errors(seed) {
            assert!(err < 1e-3, "{name} (seed {seed}): max relative error {err:.3e}");
        }
    }
}

#[test]
fn covers_the_whole_primitive_set() {
    let names: Vec<String> = primitive_gradient_errors(9).into_iter().map(|(n, _)| n).collect();
    for want in [
        "conv2d k=1",
        "conv2d k=3",
        "linear",
        "relu",
        "sigmoid",
        "sine",
        "batchnorm2d",
        "concat",
        "l1_loss",
    ] {
        assert!(names.iter().any(|n| n.starts_with(want)), "missing {want}: {names:?}");
    }
}

#[test]
fn composed_stage1_graph_matches_finite_differences() {
    for seed in [4, 5] {
        let err = composed_stage1_error(seed);
        assert!(err < 1e-2, "seed {seed}: max relative error {err:.3e}");
    }
}

mod common;

use cbvd::metrics::{psnr, ssim, MetricsReport, PSNR_CAP_DB};
use cbvd::tensor::Tensor;
use common::{direct_psnr, direct_ssim, random_frame, random_pair, rng};
use rand::Rng;

#[test]
fn psnr_and_ssim_match_direct_formulas_on_random_pairs() {
    let mut r = rng(2024);
    let (mut worst_p, mut worst_s) = (0.0f64, 0.0f64);
    for i in 0..100 {
        let (a, b) = if i % 2 == 0 {
            random_pair(&mut r, 3, 64, 64)
        } else {
            (random_frame([3, 64, 64], &mut r), random_frame([3, 64, 64], &mut r))
        };
        worst_p = worst_p.max((psnr(&a, &b).unwrap() - direct_psnr(&a, &b)).abs());
        worst_s = worst_s.max((ssim(&a, &b).unwrap() - direct_ssim(&a, &b)).abs());
    }
    assert!(worst_p <= 1e-6, "psnr deviates by {worst_p:.3e}");
    assert!(worst_s <= 1e-5, "ssim deviates by {worst_s:.3e}");
}

#[test]
fn identical_frames_hit_the_cap_and_unit_ssim() {
    let mut r = rng(5);
    let a = random_frame([3, 64, 64], &mut r);
    assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
    assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    let flat = Tensor::full([1, 32, 32], 0.25);
    assert_eq!(psnr(&flat, &flat).unwrap(), PSNR_CAP_DB);
    assert!((ssim(&flat, &flat).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn doubling_the_error_costs_twenty_log_two() {
    let mut r = rng(8);
    let expected = 20.0 * 2f64.log10();
    for _ in 0..20 {
        // 8-bit levels and power-of-two errors keep both shifted frames exact in f32.
        let a = Tensor::from_fn([3, 32, 32], |_| (64 + r.random_range(0..128)) as f32 / 256.0);
        let e: Vec<f32> = (0..a.numel())
            .map(|_| r.random_range(-4i32..=4) as f32 / 256.0)
            .collect();
        let shifted = |k: f32| {
            let d = a.data().iter().zip(&e).map(|(&x, &d)| x + k * d).collect();
            Tensor::new([3, 32, 32], d).unwrap()
        };
        if e.iter().all(|&d| d == 0.0) {
            continue;
        }
        let drop = psnr(&shifted(1.0), &a).unwrap() - psnr(&shifted(2.0), &a).unwrap();
        assert!((drop - expected).abs() <= 1e-6, "drop {drop} vs {expected}");
    }
}

#[test]
fn report_means_follow_frames() {
    let mut r = rng(3);
    let pairs: Vec<(Tensor, Tensor)> = (0..4).map(|_| random_pair(&mut r, 3, 32, 32)).collect();
    let (outs, clean): (Vec<_>, Vec<_>) = pairs.into_iter().map(|(a, b)| (b, a)).unzip();
    let rep = MetricsReport::evaluate("x", "gaussian", 25.0, &outs, &clean).unwrap();
    let mean: f64 = outs.iter().zip(&clean).map(|(o, c)| direct_psnr(o, c)).sum::<f64>() / 4.0;
    assert!((rep.mean_psnr() - mean).abs() < 1e-9);
    let rows = rep.per_frame_rows();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[4].variant, "mean");
}

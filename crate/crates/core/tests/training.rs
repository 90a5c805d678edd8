mod common;

use cbvd::frames::FrameSequence;
use cbvd::networks::init_params;
use cbvd::tensor::Tensor;
use cbvd::trainer::{
    denoise_sequence, train_stage1, train_stage1_with, train_stage2, train_stage2_with, OutputStage, Stage, TrainConfig,
};
use cbvd::Error;
use common::{tiny_config, tiny_sequence};

#[test]
fn zero_epochs_leave_the_initialization_untouched() {
    let seq = tiny_sequence(1);
    let cfg = TrainConfig {
        epochs_stage1: 0,
        epochs_stage2: 0,
        ..tiny_config()
    };
    let s1 = train_stage1(&seq, &cfg).unwrap();
    let init = init_params(&s1.config.architecture(3), cfg.seed).unwrap();
    assert_eq!(s1.params, init);
    let s2 = train_stage2(&seq, &s1, &cfg).unwrap();
    assert_eq!(s2.params, init);
    assert_eq!(s2.stage, Stage::AfterStage2);
}

#[test]
fn training_is_deterministic() {
    let seq = tiny_sequence(2);
    let cfg = tiny_config();
    let a = train_stage2(&seq, &train_stage1(&seq, &cfg).unwrap(), &cfg).unwrap();
    let b = train_stage2(&seq, &train_stage1(&seq, &cfg).unwrap(), &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());

    let other = train_stage1(
        &seq,
        &TrainConfig {
            seed: cfg.seed + 1,
            ..cfg.clone()
        },
    )
    .unwrap();
    assert_ne!(other.params.feature, a.params.feature);
}

#[test]
fn stage_two_only_moves_the_refiner() {
    let seq = tiny_sequence(3);
    let cfg = tiny_config();
    let s1 = train_stage1(&seq, &cfg).unwrap();
    let s2 = train_stage2(&seq, &s1, &cfg).unwrap();
    assert_eq!(s1.params.feature, s2.params.feature);
    assert_eq!(s1.params.denoise, s2.params.denoise);
    assert_ne!(s1.params.refine, s2.params.refine);
    assert_eq!(s1.adam_stage1, s2.adam_stage1);
}

#[test]
fn losses_fall_over_training() {
    let seq = tiny_sequence(4);
    let cfg = TrainConfig {
        epochs_stage1: 40,
        epochs_stage2: 40,
        ..tiny_config()
    };
    let mut l1 = Vec::new();
    let s1 = train_stage1_with(&seq, &cfg, |e| l1.push(e.loss)).unwrap();
    let mut l2 = Vec::new();
    train_stage2_with(&seq, &s1, &cfg, |e| l2.push(e.loss)).unwrap();
    assert_eq!(l1.len(), 40);
    assert_eq!(l2.len(), 40);
    assert!(l1[39] < 0.8 * l1[0], "stage 1: {} -> {}", l1[0], l1[39]);
    assert!(l2[39] < l2[0], "stage 2: {} -> {}", l2[0], l2[39]);
}

#[test]
fn learning_rate_follows_the_step_schedule() {
    let seq = tiny_sequence(5);
    let cfg = TrainConfig {
        epochs_stage1: 5,
        lr_decay_every: 2,
        lr_decay_factor: 0.5,
        ..tiny_config()
    };
    let mut lrs = Vec::new();
    train_stage1_with(&seq, &cfg, |e| lrs.push(e.lr)).unwrap();
    let base = cfg.lr1;
    assert_eq!(lrs, vec![base, base, base * 0.5, base * 0.5, base * 0.25]);
}

#[test]
fn denoised_frames_have_the_input_shape_and_range() {
    let seq = tiny_sequence(6);
    let cfg = tiny_config();
    let s2 = train_stage2(&seq, &train_stage1(&seq, &cfg).unwrap(), &cfg).unwrap();
    for stage in [OutputStage::Denoiser, OutputStage::Refined] {
        let out = denoise_sequence(&s2, &seq, stage).unwrap();
        assert_eq!(out.len(), seq.len());
        assert_eq!(out.frame(0).shape(), seq.frame(0).shape());
        assert!(out
            .frames()
            .iter()
            .all(|f| f.data().iter().all(|v| (0.0..=1.0).contains(v))));
        assert_eq!(out.clean(), seq.clean());
    }
}

#[test]
fn stage_mismatches_are_errors() {
    let seq = tiny_sequence(7);
    let cfg = tiny_config();
    let s1 = train_stage1(&seq, &cfg).unwrap();
    assert!(matches!(
        denoise_sequence(&s1, &seq, OutputStage::Refined),
        Err(Error::Contract(_))
    ));
    let s2 = train_stage2(&seq, &s1, &cfg).unwrap();
    assert!(matches!(train_stage2(&seq, &s2, &cfg), Err(Error::Contract(_))));

    let smaller = FrameSequence::new(vec![Tensor::full([3, 8, 8], 0.5); 5]).unwrap();
    assert!(denoise_sequence(&s1, &smaller, OutputStage::Denoiser).is_err());
    let gray = FrameSequence::new(vec![Tensor::full([1, 16, 16], 0.5); 5]).unwrap();
    assert!(train_stage2(&gray, &s1, &cfg).is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    let seq = tiny_sequence(8);
    let bad = [
        TrainConfig {
            batch_frames: 4,
            ..tiny_config()
        },
        TrainConfig {
            lr1: 0.0,
            ..tiny_config()
        },
        TrainConfig {
            lr_decay_every: 0,
            ..tiny_config()
        },
    ];
    for cfg in bad {
        assert!(matches!(train_stage1(&seq, &cfg), Err(Error::Config(_))));
    }
}

#[test]
fn nan_frames_are_rejected_up_front() {
    let mut frames = tiny_sequence(9).into_frames();
    frames[2].data_mut()[0] = f32::NAN;
    assert!(matches!(FrameSequence::new(frames), Err(Error::Contract(_))));
}

#[test]
fn diverging_training_reports_the_last_good_epoch() {
    let seq = tiny_sequence(9);
    let cfg = TrainConfig {
        lr1: 1e38,
        epochs_stage1: 20,
        ..tiny_config()
    };
    match train_stage1(&seq, &cfg) {
        Err(Error::NonFiniteLoss {
            stage: 1,
            epoch,
            last_good,
        }) => assert_eq!(last_good, epoch.checked_sub(1)),
        other => panic!("expected a non-finite loss error, got {other:?}"),
    }
}

mod common;

use std::sync::OnceLock;

use cbvd::trainer::{load_checkpoint, save_checkpoint, train_stage1, train_stage2, Checkpoint};
use common::{tiny_config, tiny_sequence};
use proptest::prelude::*;

fn trained() -> &'static (Checkpoint, Vec<u8>) {
    static CELL: OnceLock<(Checkpoint, Vec<u8>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let seq = tiny_sequence(1);
        let cfg = tiny_config();
        let ckpt = train_stage2(&seq, &train_stage1(&seq, &cfg).unwrap(), &cfg).unwrap();
        let bytes = ckpt.to_bytes().unwrap();
        (ckpt, bytes)
    })
}

#[test]
fn file_roundtrip_is_bit_exact() {
    let (ckpt, bytes) = trained();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/model.ckpt");
    save_checkpoint(ckpt, &path).unwrap();
    assert_eq!(&std::fs::read(&path).unwrap(), bytes);
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(&back, ckpt);
    assert_eq!(&back.to_bytes().unwrap(), bytes);
}

#[test]
fn stage_one_checkpoint_roundtrips() {
    let seq = tiny_sequence(2);
    let s1 = train_stage1(&seq, &tiny_config()).unwrap();
    let back = Checkpoint::from_bytes(&s1.to_bytes().unwrap()).unwrap();
    assert_eq!(back, s1);
    assert!(back.adam_stage2.is_none());
}

#[test]
fn every_truncation_is_rejected() {
    let (_, bytes) = trained();
    for cut in 0..bytes.len() {
        assert!(
            Checkpoint::from_bytes(&bytes[..cut]).is_err(),
            "accepted {cut} of {} bytes",
            bytes.len()
        );
    }
}

#[test]
fn trailing_garbage_is_rejected() {
    let (_, bytes) = trained();
    let mut longer = bytes.clone();
    longer.extend_from_slice(&[1, 2, 3]);
    assert!(Checkpoint::from_bytes(&longer).is_err());
}

#[test]
fn missing_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_checkpoint(&dir.path().join("absent.ckpt")).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn flipped_bytes_never_panic(pos in any::<prop::sample::Index>(), mask in 1u8..=255) {
        let (ckpt, bytes) = trained();
        let mut damaged = bytes.clone();
        let i = pos.index(damaged.len());
        damaged[i] ^= mask;
        // Flips inside float data or config values can still decode.
        if let Ok(back) = Checkpoint::from_bytes(&damaged) {
            prop_assert!(back.to_bytes().is_ok());
            prop_assert_eq!(back.params.feature.len(), ckpt.params.feature.len());
        }
    }

    #[test]
    fn random_bytes_never_panic(data in prop::collection::vec(any::<u8>(), 0..512)) {
        let _ = Checkpoint::from_bytes(&data);
        let mut prefixed = b"CBVD".to_vec();
        prefixed.extend_from_slice(&1u32.to_le_bytes());
        prefixed.extend_from_slice(&data);
        let _ = Checkpoint::from_bytes(&prefixed);
    }
}

mod common;

use common::*;
use invgan::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use invgan::config::{parse_finetune_config, parse_train_config, render_finetune_config, render_train_config};
use invgan::report::{parse_metrics_csv, parse_phase_report, render_metrics_csv, render_phase_report};
use invgan::{Error, FormatError};
use proptest::prelude::*;
use proptest::strategy::ValueTree;

proptest! {
    #[test]
    fn checkpoint_bytes_are_stable(ck in checkpoint()) {
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        prop_assert_eq!(back.role, ck.role);
        prop_assert_eq!(back.iteration, ck.iteration);
    }

    #[test]
    fn any_single_bit_flip_is_detected(ck in checkpoint(), pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let mut bytes = ck.to_bytes();
        let i = pos.index(bytes.len());
        bytes[i] ^= 1 << bit;
        prop_assert!(Checkpoint::from_bytes(&bytes).is_err());
    }

    #[test]
    fn truncation_is_a_format_error(ck in checkpoint(), cut in any::<prop::sample::Index>()) {
        let bytes = ck.to_bytes();
        let n = cut.index(bytes.len());
        let err = Checkpoint::from_bytes(&bytes[..n]).unwrap_err();
        prop_assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn train_config_round_trip(cfg in train_config()) {
        prop_assert_eq!(parse_train_config(&render_train_config(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn finetune_config_round_trip(cfg in finetune_config()) {
        prop_assert_eq!(parse_finetune_config(&render_finetune_config(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn metrics_csv_round_trip(rows in records(), footer in prop::option::of(phase_report())) {
        let text = render_metrics_csv(&rows, footer.as_ref()).unwrap();
        let (back, back_footer) = parse_metrics_csv(&text).unwrap();
        prop_assert!(same_bits(&rows, &back));
        prop_assert_eq!(back_footer.is_some(), footer.is_some());
        if let (Some(a), Some(b)) = (footer, back_footer) {
            prop_assert_eq!(render_phase_report(&a), render_phase_report(&b));
        }
    }

    #[test]
    fn phase_report_round_trip(rep in phase_report()) {
        let text = render_phase_report(&rep);
        prop_assert_eq!(render_phase_report(&parse_phase_report(&text).unwrap()), text);
    }
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    for i in 0..20 {
        let ck = checkpoint().new_tree(&mut runner).unwrap().current();
        let path = dir.path().join(format!("{i}.uagc"));
        save_checkpoint(&ck, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), ck.to_bytes());
        assert_eq!(load_checkpoint(&path).unwrap().to_bytes(), ck.to_bytes());
    }
}

#[test]
fn named_format_errors() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let bytes = checkpoint().new_tree(&mut runner).unwrap().current().to_bytes();
    let mut bad = bytes.clone();
    bad[..4].copy_from_slice(b"XXXX");
    assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Format(FormatError::BadMagic(_)))));
    let mut bad = bytes.clone();
    bad[4] = 2;
    assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Format(FormatError::VersionMismatch { .. }))));
    let mut bad = bytes.clone();
    let last_payload = bad.len() - 5;
    bad[last_payload] ^= 0x10;
    assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Format(FormatError::Checksum { .. }))));
    assert!(matches!(
        Checkpoint::from_bytes(&bytes[..bytes.len() - 2]),
        Err(Error::Format(FormatError::Truncated { .. }))
    ));
}

use fdbench_core::features::{
    decode_feature_set, encode_feature_set, read_feature_set, write_feature_set,
};
use fdbench_core::{Error, FeatureMeta, FeatureSet, Role};
use proptest::prelude::*;

fn meta_strategy() -> impl Strategy<Value = FeatureMeta> {
    (
        prop_oneof![Just(Role::Generated), Just(Role::RealTest), Just(Role::RealTrain)],
        "[a-z0-9_-]{0,12}",
        "[ -~]{0,20}",
    )
        .prop_map(|(role, ext, src)| FeatureMeta::new(role).with_extractor(ext).with_source(src))
}

fn set_strategy() -> impl Strategy<Value = FeatureSet> {
    (1usize..12, 1usize..9, meta_strategy()).prop_flat_map(|(n, d, meta)| {
        prop::collection::vec(-1e6f32..1e6f32, n * d)
            .prop_map(move |data| FeatureSet::new(data, n, d, meta.clone()).unwrap())
    })
}

proptest! {
    #[test]
    fn encode_decode_is_identity(fs in set_strategy()) {
        let bytes = encode_feature_set(&fs).unwrap();
        let back = decode_feature_set(&bytes).unwrap();
        prop_assert_eq!(back.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        fs.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(back, fs);
    }

    #[test]
    fn any_payload_byte_flip_is_corruption(fs in set_strategy(), pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let mut bytes = encode_feature_set(&fs).unwrap();
        let payload = 4 * fs.n() * fs.d();
        let at = bytes.len() - payload + pos.index(payload);
        bytes[at] ^= 1 << bit;
        prop_assert!(matches!(decode_feature_set(&bytes), Err(Error::Corruption(_))));
    }

    #[test]
    fn decoder_never_panics_on_garbage(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        if let Ok(fs) = decode_feature_set(&bytes) {
            prop_assert!(fs.as_slice().iter().all(|v| v.is_finite()));
            prop_assert_eq!(fs.as_slice().len(), fs.n() * fs.d());
        }
    }
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.fdbf");
    let fs = FeatureSet::from_rows(
        &[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]],
        FeatureMeta::new(Role::RealTest).with_extractor("inception"),
    )
    .unwrap();
    write_feature_set(&fs, &path).unwrap();
    assert_eq!(read_feature_set(&path).unwrap(), fs);
}

#[test]
fn missing_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = read_feature_set(dir.path().join("nope.fdbf")).unwrap_err();
    assert!(matches!(err, Error::Io(_)));
    assert!(err.is_io_or_format());
}

#[test]
fn truncation_at_every_length_is_rejected() {
    let fs = FeatureSet::from_rows(&[[1.0, 2.0], [3.0, 4.0]], FeatureMeta::new(Role::Generated)).unwrap();
    let bytes = encode_feature_set(&fs).unwrap();
    for len in 0..bytes.len() {
        assert!(decode_feature_set(&bytes[..len]).is_err(), "length {len}");
    }
}

use coversynth::pipeline::{decode_tensor, dump_array, encode_tensor, load_tensor, RunManifest, Tensor};
use ndarray::Array3;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    any::<u64>()
        .prop_map(f64::from_bits)
        .prop_filter("finite", |v| v.is_finite())
}

fn tensor() -> impl Strategy<Value = Tensor> {
    prop::collection::vec(0usize..5, 0..4).prop_flat_map(|shape| {
        let n = shape.iter().product::<usize>();
        prop::collection::vec(finite(), n).prop_map(move |data| Tensor::new(shape.clone(), data).unwrap())
    })
}

#[test]
fn header_layout_is_fixed() {
    let t = Tensor::new(vec![2, 1], vec![1.5, -0.25]).unwrap();
    let bytes = encode_tensor(&t).unwrap();
    let mut expect = b"CSTN".to_vec();
    expect.push(1);
    expect.push(2);
    expect.extend(2u64.to_le_bytes());
    expect.extend(1u64.to_le_bytes());
    expect.extend(1.5f64.to_le_bytes());
    expect.extend((-0.25f64).to_le_bytes());
    assert_eq!(bytes, expect);
}

#[test]
fn files_round_trip_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let a = Array3::from_shape_fn((3, 4, 5), |(i, j, k)| (i as f64).sin() * 1e-300 + (j * k) as f64 / 7.0);
    let path = dir.path().join("a.cstn");
    dump_array(&path, &a).unwrap();
    let back = load_tensor(&path).unwrap();
    assert_eq!(back.shape, vec![3, 4, 5]);
    let back = back.into_array();
    assert!(a.iter().zip(back.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));

    let empty = Array3::<f64>::zeros((2, 0, 3));
    dump_array(&path, &empty).unwrap();
    assert_eq!(load_tensor(&path).unwrap().shape, vec![2, 0, 3]);
}

#[test]
fn corrupt_files_are_errors() {
    let good = encode_tensor(&Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    let mut bad_version = good.clone();
    bad_version[4] = 9;
    let mut trailing = good.clone();
    trailing.push(0);
    let mut huge = good[..6].to_vec();
    huge.extend(u64::MAX.to_le_bytes());
    huge.extend(u64::MAX.to_le_bytes());
    let mut nan = good.clone();
    let at = nan.len() - 8;
    nan[at..].copy_from_slice(&f64::NAN.to_le_bytes());
    for bytes in [
        bad_magic,
        bad_version,
        trailing,
        huge,
        nan,
        good[..good.len() - 1].to_vec(),
        Vec::new(),
    ] {
        assert!(decode_tensor(&bytes).is_err());
    }
    assert!(encode_tensor(&Tensor {
        shape: vec![1],
        data: vec![f64::INFINITY]
    })
    .is_err());
}

#[test]
fn manifest_json_round_trips() {
    let m = RunManifest {
        tempo_a: 117.453,
        tempo_a_prime: 121.1,
        tempo_b: 99.99,
        tempo_factor: 0.1 + 0.2,
        final_tempo: 118.0,
        alignment_score: 42,
        alignment_pairs: 40,
        snippet_start_seconds: 3.25,
        snippet_end_seconds: 23.1,
        b_offset_seconds: 0.0,
        components: 3,
        joint_objective: 1.0 / 3.0,
        pretrain_objective: None,
        fit_objective: 2.0 / 3.0,
        musaic_divergence: vec![1e-12, 5.5],
        blurry_baseline: false,
        output_seconds: 19.75,
        seed: 7,
    };
    assert_eq!(RunManifest::from_json(&m.to_json()).unwrap(), m);
    assert!(RunManifest::from_json("{\"tempo_a\": 1}").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn encoding_round_trips_bitwise(t in tensor()) {
        let back = decode_tensor(&encode_tensor(&t).unwrap()).unwrap();
        prop_assert_eq!(&back.shape, &t.shape);
        prop_assert!(back.data.iter().zip(&t.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn every_strict_prefix_is_rejected(t in tensor()) {
        let bytes = encode_tensor(&t).unwrap();
        for cut in 0..bytes.len() {
            prop_assert!(decode_tensor(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..128), magic in any::<bool>()) {
        let mut bytes = bytes;
        if magic && bytes.len() >= 5 {
            bytes[..5].copy_from_slice(b"CSTN\x01");
        }
        let _ = decode_tensor(&bytes);
    }
}

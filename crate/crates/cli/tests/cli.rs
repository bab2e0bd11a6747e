use std::path::Path;
use std::process::{Command, Output};

use coversynth::alignment::AlignmentPath;
use coversynth::audio::{read_wav, write_wav};
use coversynth::fixtures::{chord, music_like};
use coversynth::musaicing::build_dictionary;
use coversynth::pipeline::{dump_tensor, load_tensor, Tensor};
use coversynth::spectral::{stft, StftConfig};
use coversynth::SAMPLE_RATE;

fn coversynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coversynth"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bad_configuration_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("x.wav");
    write_wav(&wav, &chord(&[220.0], 6.0, SAMPLE_RATE)).unwrap();
    let out = dir.path().join("out.wav");
    let args = [
        "run",
        "--song-a",
        s(&wav),
        "--song-a-prime",
        s(&wav),
        "--song-b",
        s(&wav),
        "--out",
        s(&out),
    ];
    let mut bad = args.to_vec();
    bad.extend(["--components", "0"]);
    assert_eq!(coversynth(&bad).status.code(), Some(2));
    let mut bad = args.to_vec();
    bad.extend(["--snippet-seconds", "-1"]);
    assert_eq!(coversynth(&bad).status.code(), Some(2));
    let mut bad = args.to_vec();
    bad.extend(["--threads", "0"]);
    assert_eq!(coversynth(&bad).status.code(), Some(2));
    // unparseable flags are usage errors
    assert_eq!(coversynth(&["run", "--components", "many"]).status.code(), Some(2));
}

#[test]
fn stage_failure_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.wav");
    let out = dir.path().join("out.wav");
    let o = coversynth(&[
        "run",
        "--song-a",
        s(&missing),
        "--song-a-prime",
        s(&missing),
        "--song-b",
        s(&missing),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("load"));
    assert!(!out.exists());
}

#[test]
fn align_writes_path_and_similarity() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.wav");
    let b = dir.path().join("b.wav");
    write_wav(&a, &music_like(24.0, 120.0, 1, SAMPLE_RATE)).unwrap();
    write_wav(&b, &music_like(24.0, 110.0, 1, SAMPLE_RATE)).unwrap();
    let out = dir.path().join("al");
    let o = coversynth(&[
        "--threads",
        "1",
        "align",
        "--song-a",
        s(&a),
        "--song-a-prime",
        s(&b),
        "--out-dir",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (path, ts, ss) =
        AlignmentPath::parse(&std::fs::read_to_string(out.join("alignment_path.txt")).unwrap()).unwrap();
    assert!(path.is_valid() && path.len() >= 2);
    assert_eq!(ts.len(), path.len());
    assert_eq!(ss.len(), path.len());
    let sim = load_tensor(out.join("similarity.cstn")).unwrap();
    assert_eq!(sim.shape.len(), 2);
}

#[test]
fn factorize_writes_templates_and_activations() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.wav");
    let ap = dir.path().join("ap.wav");
    write_wav(&a, &music_like(3.0, 120.0, 1, SAMPLE_RATE)).unwrap();
    write_wav(&ap, &music_like(2.9, 120.0, 2, SAMPLE_RATE)).unwrap();
    let out = dir.path().join("f");
    let o = coversynth(&[
        "factorize",
        "--song-a",
        s(&a),
        "--song-a-prime",
        s(&ap),
        "--song-b",
        s(&ap),
        "--out-dir",
        s(&out),
        "--components",
        "2",
        "--iters",
        "3",
        "--time-lags",
        "5",
        "--freq-shifts",
        "4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["W1", "W2", "H1", "H2"] {
        assert!(out.join(format!("{name}.cstn")).exists(), "{name}");
    }
    assert_eq!(load_tensor(out.join("W2.cstn")).unwrap().shape, vec![189, 2, 5]);
    let log = std::fs::read_to_string(out.join("joint_objective.txt")).unwrap();
    assert_eq!(log.lines().count(), 4);
}

#[test]
fn musaic_accepts_wavs_and_tensors() {
    let dir = tempfile::tempdir().unwrap();
    let src = chord(&[220.0, 330.0], 1.0, SAMPLE_RATE);
    let src_prime = chord(&[440.0], 1.0, SAMPLE_RATE);
    let target = chord(&[247.0], 0.5, SAMPLE_RATE);
    let paths: Vec<_> = ["s.wav", "sp.wav", "t.wav"]
        .iter()
        .map(|n| dir.path().join(n))
        .collect();
    for (p, c) in paths.iter().zip([&src, &src_prime, &target]) {
        write_wav(p, c).unwrap();
    }
    let out = dir.path().join("o.wav");
    let acts = dir.path().join("h.cstn");
    let o = coversynth(&[
        "musaic",
        "--source",
        s(&paths[0]),
        "--source-prime",
        s(&paths[1]),
        "--target",
        s(&paths[2]),
        "--out",
        s(&out),
        "--musaic-iters",
        "3",
        "--save-activations",
        s(&acts),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_wav(&out).unwrap().len(), target.len());
    assert!(dir.path().join("h.txt").exists());

    // the same inputs as precomputed tensors give the same result
    let cfg = StftConfig::default();
    let [src, src_prime, target] = [0, 1, 2].map(|i| read_wav(&paths[i]).unwrap());
    let tensors: Vec<_> = ["s.cstn", "sp.cstn", "t.cstn"]
        .iter()
        .map(|n| dir.path().join(n))
        .collect();
    dump_tensor(
        &tensors[0],
        &Tensor::from_complex(&build_dictionary(&src, &cfg).unwrap().spec.values),
    )
    .unwrap();
    dump_tensor(
        &tensors[1],
        &Tensor::from_complex(&build_dictionary(&src_prime, &cfg).unwrap().spec.values),
    )
    .unwrap();
    dump_tensor(&tensors[2], &Tensor::from_complex(&stft(&target, &cfg).unwrap().values)).unwrap();
    let out2 = dir.path().join("o2.wav");
    let o = coversynth(&[
        "musaic",
        "--source",
        s(&tensors[0]),
        "--source-prime",
        s(&tensors[1]),
        "--target",
        s(&tensors[2]),
        "--out",
        s(&out2),
        "--musaic-iters",
        "3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let y = read_wav(&out2).unwrap();
    let x = read_wav(&out).unwrap();
    // the tensor target has no record of its exact length; it may end early
    assert!(y.len() <= x.len() && x.len() - y.len() < cfg.hop_size);
    assert_eq!(&x.samples()[..y.len()], y.samples());
}

#[test]
fn corrupt_tensor_input_is_a_stage_failure() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cstn");
    std::fs::write(&bad, b"CSTN\x01\x02garbage").unwrap();
    let out = dir.path().join("o.wav");
    let o = coversynth(&[
        "musaic",
        "--source",
        s(&bad),
        "--source-prime",
        s(&bad),
        "--target",
        s(&bad),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

use std::path::Path;

use coversynth::audio::write_wav;
use coversynth::fixtures::music_like;
use coversynth::pipeline::{load_tensor, run_pipeline, PipelineConfig, RunManifest};
use coversynth::SAMPLE_RATE;

/// Writes a 20 s cover triple at 120, 120 and 100 bpm and returns a fast
/// configuration for it.
fn small_run(dir: &Path) -> PipelineConfig {
    let songs = [("a.wav", 120.0, 1), ("ap.wav", 120.0, 2), ("b.wav", 100.0, 3)];
    for (name, bpm, seed) in songs {
        write_wav(dir.join(name), &music_like(20.0, bpm, seed, SAMPLE_RATE)).unwrap();
    }
    let mut cfg = PipelineConfig::new(
        dir.join("a.wav"),
        dir.join("ap.wav"),
        dir.join("b.wav"),
        dir.join("out.wav"),
    );
    cfg.snippet_seconds = 4.0;
    cfg.nmf.iterations = 8;
    cfg.nmf.components = 2;
    cfg.musaic.iterations = 4;
    cfg.griffin_lim_iterations = 4;
    cfg.seed = 7;
    cfg
}

fn files_in(dir: &Path, prefix: &str, ext: &str) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name.starts_with(prefix) && name.ends_with(ext)
        })
        .count()
}

#[test]
fn run_writes_output_manifest_and_intermediates() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_run(dir.path());
    let inter = dir.path().join("inter");
    cfg.save_intermediates = Some(inter.clone());
    let out = run_pipeline(&cfg).unwrap();

    let m = &out.manifest;
    assert_eq!(m.tempo_factor, (m.tempo_b / m.tempo_a) * (m.tempo_a_prime / m.tempo_a));
    assert!(
        (m.tempo_a - 120.0).abs() < 3.0 && (m.tempo_b - 100.0).abs() < 3.0,
        "{m:?}"
    );
    assert_eq!(m.musaic_divergence.len(), 2);
    let written = RunManifest::from_json(&std::fs::read_to_string(cfg.manifest_path()).unwrap()).unwrap();
    assert_eq!(&written, m);
    assert!(cfg.timings_path().exists());
    assert!(cfg.output.exists());
    assert!(out.b_prime.samples().iter().all(|v| v.is_finite()));

    // counting contract: 2 template tensors, 2 activation tensors,
    // 3K filtered tracks and K musaic activation dumps
    assert_eq!(files_in(&inter, "W", ".cstn"), 2);
    assert_eq!(files_in(&inter, "H", ".cstn"), 2);
    assert_eq!(files_in(&inter, "track_", ".wav"), 6);
    assert_eq!(files_in(&inter, "musaic_H_", ".cstn"), 2);
    assert_eq!(files_in(&inter, "masks_", ".cstn"), 3);
    assert!(inter.join("alignment_path.txt").exists());
    let w1 = load_tensor(inter.join("W1.cstn")).unwrap();
    assert_eq!(w1.shape, vec![189, 2, cfg.nmf.time_lags]);
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_run(dir.path());
    run_pipeline(&cfg).unwrap();
    let wav1 = std::fs::read(&cfg.output).unwrap();
    let man1 = std::fs::read(cfg.manifest_path()).unwrap();
    run_pipeline(&cfg).unwrap();
    assert_eq!(std::fs::read(&cfg.output).unwrap(), wav1);
    assert_eq!(std::fs::read(cfg.manifest_path()).unwrap(), man1);
}

#[test]
fn blurry_baseline_keeps_the_duration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_run(dir.path());
    let full = run_pipeline(&cfg).unwrap();
    let mut blurry = cfg.clone();
    blurry.blurry_baseline = true;
    blurry.output = dir.path().join("blurry.wav");
    let base = run_pipeline(&blurry).unwrap();
    assert_eq!(base.b_prime.len(), full.b_prime.len());
    assert!(base.manifest.musaic_divergence.is_empty());
}

#[test]
fn failed_run_removes_its_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_run(dir.path());
    let inter = dir.path().join("inter");
    cfg.save_intermediates = Some(inter.clone());
    // past the end of B: the snippet is empty and the CQT stage fails after
    // the alignment artifacts were written
    cfg.b_offset_seconds = Some(1000.0);
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(err.to_string().contains("stage"), "{err}");
    assert!(!err.is_config());
    assert_eq!(std::fs::read_dir(&inter).unwrap().count(), 0);
    assert!(!cfg.output.exists());
}

#[test]
fn missing_input_is_a_load_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_run(dir.path());
    cfg.song_b = dir.path().join("missing.wav");
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(err.to_string().contains("`load`"), "{err}");
}

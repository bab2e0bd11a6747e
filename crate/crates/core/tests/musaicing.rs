use coversynth::audio::AudioClip;
use coversynth::fixtures::{chord, music_like, tone};
use coversynth::musaicing::*;
use coversynth::spectral::{istft, stft, ComplexSpectrogram, Layout, StftConfig};
use coversynth::SAMPLE_RATE;
use ndarray::{s, Array2, ArrayView2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

fn random_matrix(m: usize, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((m, n), || rng.random::<f64>())
}

fn suppression(iter: usize, total: usize) -> f64 {
    1.0 - (iter as f64 + 1.0) / total as f64
}

fn naive_repeats(h: &Array2<f64>, r: usize, iter: usize, total: usize) -> Array2<f64> {
    let (rows, cols) = h.dim();
    Array2::from_shape_fn((rows, cols), |(k, m)| {
        let lo = m.saturating_sub(r);
        let hi = (m + r).min(cols - 1);
        let max = (lo..=hi).map(|j| h[[k, j]]).fold(f64::NEG_INFINITY, f64::max);
        if h[[k, m]] == max {
            h[[k, m]]
        } else {
            h[[k, m]] * suppression(iter, total)
        }
    })
}

fn naive_polyphony(h: &Array2<f64>, p: usize, iter: usize, total: usize) -> Array2<f64> {
    let (rows, cols) = h.dim();
    let mut out = h.clone();
    for m in 0..cols {
        let mut col: Vec<f64> = h.column(m).to_vec();
        col.sort_by(|a, b| b.total_cmp(a));
        let threshold = col[p.min(rows) - 1];
        for k in 0..rows {
            if h[[k, m]] < threshold {
                out[[k, m]] *= suppression(iter, total);
            }
        }
    }
    out
}

fn naive_continuity(p: &Array2<f64>, c: usize) -> Array2<f64> {
    let (rows, cols) = p.dim();
    let c = c as isize;
    Array2::from_shape_fn((rows, cols), |(k, m)| {
        let mut total = 0.0;
        for i in -c..=c {
            let (kk, mm) = (k as isize + i, m as isize + i);
            if (0..rows as isize).contains(&kk) && (0..cols as isize).contains(&mm) {
                total += p[[kk as usize, mm as usize]];
            }
        }
        total
    })
}

/// One multiplicative KL step written out entry by entry.
fn naive_kl_step(c: &Array2<f64>, d: &Array2<f64>, t: &Array2<f64>, eps: f64) -> Array2<f64> {
    let (rows, grains) = d.dim();
    let frames = c.ncols();
    let mut approx = Array2::<f64>::zeros((rows, frames));
    for i in 0..rows {
        for n in 0..frames {
            for g in 0..grains {
                approx[[i, n]] += d[[i, g]] * c[[g, n]];
            }
        }
    }
    let mut out = c.clone();
    for g in 0..grains {
        let mut den = 0.0;
        for i in 0..rows {
            den += d[[i, g]];
        }
        for n in 0..frames {
            let mut num = 0.0;
            for i in 0..rows {
                num += d[[i, g]] * t[[i, n]] / (approx[[i, n]] + eps);
            }
            out[[g, n]] *= num / (den + eps);
        }
    }
    out
}

fn stft_spec(values: Array2<Complex64>) -> ComplexSpectrogram {
    let cfg = StftConfig::default();
    ComplexSpectrogram {
        residual: Array2::zeros((0, values.ncols())),
        signal_len: (values.ncols() - 1) * cfg.hop_size,
        values,
        layout: Layout::Stft(cfg),
        sample_rate: SAMPLE_RATE,
    }
}

fn kl(x: ArrayView2<f64>, y: ArrayView2<f64>) -> f64 {
    x.iter()
        .zip(y.iter())
        .map(|(&a, &b)| {
            let b = b.max(1e-10);
            if a == 0.0 {
                b
            } else {
                a * (a / b).ln() - a + b
            }
        })
        .sum()
}

#[test]
fn constraints_match_naive_loops() {
    for seed in 0..40 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rows, cols) = (rng.random_range(1..=30), rng.random_range(1..=30));
        let h = random_matrix(rows, cols, seed + 100);
        let total = rng.random_range(1..20);
        let iter = rng.random_range(0..total);
        for r in 0..5 {
            assert_eq!(
                restrict_repeats(h.view(), r, iter, total),
                naive_repeats(&h, r, iter, total)
            );
        }
        for p in 1..=rows {
            assert_eq!(
                restrict_polyphony(h.view(), p, iter, total),
                naive_polyphony(&h, p, iter, total)
            );
        }
        for c in 0..5 {
            assert_eq!(promote_continuity(h.view(), c), naive_continuity(&h, c));
        }
    }
}

#[test]
fn last_iteration_suppresses_fully() {
    let h = ndarray::array![[1.0, 5.0, 2.0]];
    assert_eq!(restrict_repeats(h.view(), 1, 9, 10), ndarray::array![[0.0, 5.0, 0.0]]);
    let col = ndarray::array![[9.0], [7.0], [5.0], [3.0]];
    assert_eq!(
        restrict_polyphony(col.view(), 2, 9, 10),
        ndarray::array![[9.0], [7.0], [0.0], [0.0]]
    );
    assert_eq!(restrict_polyphony(col.view(), 4, 0, 10), col);
    assert_eq!(decay(9, 10), 0.0);
}

#[test]
fn kl_update_matches_scalar_loops() {
    for seed in 0..20 {
        let c = random_matrix(7, 5, seed);
        let d = random_matrix(9, 7, seed + 1);
        let t = random_matrix(9, 5, seed + 2);
        let (fast, div) = kl_update(c.view(), d.view(), t.view(), 1e-10).unwrap();
        let slow = naive_kl_step(&c, &d, &t, 1e-10);
        for (a, b) in fast.iter().zip(slow.iter()) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "{a} vs {b}");
        }
        assert!((div - kl(t.view(), d.dot(&c).view())).abs() <= 1e-10 * div.max(1.0));
    }
    let c = random_matrix(3, 2, 1);
    assert!(kl_update(
        c.view(),
        random_matrix(4, 2, 2).view(),
        random_matrix(4, 2, 3).view(),
        1e-10
    )
    .is_err());
}

#[test]
fn exact_target_is_a_fixed_point_up_to_column_scaling() {
    let c = random_matrix(6, 4, 5);
    let d = random_matrix(8, 6, 6);
    let t = d.dot(&c);
    let (next, _) = kl_update(c.view(), d.view(), t.view(), 1e-10).unwrap();
    // ratio is one everywhere, so the update is D^T 1 / (D^T 1 + eps)
    for (a, b) in next.iter().zip(c.iter()) {
        assert!((a - b).abs() <= 1e-8 * b, "{a} vs {b}");
    }
    let zero = Array2::zeros((8, 4));
    let (next, _) = kl_update(c.view(), d.view(), zero.view(), 1e-10).unwrap();
    assert!(next.iter().all(|&v| v == 0.0));
}

fn small_dictionary(clip: &AudioClip) -> GrainDictionary {
    build_dictionary(clip, &StftConfig::default()).unwrap()
}

#[test]
fn dictionary_blocks_hold_shifted_copies() {
    let cfg = StftConfig::default();
    let d = small_dictionary(&tone(440.0, 0.5, SAMPLE_RATE));
    assert_eq!(d.grains(), 13 * d.block_frames);
    let bin_hz = SAMPLE_RATE as f64 / cfg.window_size as f64;
    for shift in [-6, -2, 0, 3, 6] {
        let block = d.spec.values.slice(s![.., d.block(shift)]);
        let mid = block.column(d.block_frames / 2);
        let peak = (0..mid.len())
            .max_by(|&a, &b| mid[a].norm().total_cmp(&mid[b].norm()))
            .unwrap();
        let expect = 440.0 * 2f64.powf(shift as f64 / 12.0) / bin_hz;
        assert!(
            (peak as f64 - expect).abs() <= 1.0,
            "shift {shift}: bin {peak}, expected {expect:.1}"
        );
    }
}

/// Per-column best single scaled grain, scored by KL.
fn nearest_grain_divergence(dict: &Array2<f64>, target: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    for col in target.columns() {
        let sum_t = col.sum();
        let best = dict
            .columns()
            .into_iter()
            .map(|g| {
                let scale = sum_t / g.sum().max(1e-300);
                let scaled = g.mapv(|v| v * scale).insert_axis(ndarray::Axis(1));
                kl(col.insert_axis(ndarray::Axis(1)), scaled.view())
            })
            .fold(f64::INFINITY, f64::min);
        total += best;
    }
    total
}

#[test]
fn grain_mixtures_beat_the_nearest_grain() {
    let dict = small_dictionary(&music_like(1.5, 120.0, 4, SAMPLE_RATE));
    let mag = dict.spec.values.mapv(|c| c.norm());
    // target columns are sums of two time-continuous runs of grains
    let frames = 24;
    let (a, b) = (dict.block(0).start + 3, dict.block(4).start + 20);
    let tgt = Array2::from_shape_fn((mag.nrows(), frames), |(i, n)| mag[[i, a + n]] + 0.7 * mag[[i, b + n]]);
    let target = stft_spec(tgt.mapv(|v| Complex64::new(v, 0.0)));
    let m = musaic_track(&dict, &dict, &target, &MusaicConfig::default(), 1).unwrap();
    let baseline = nearest_grain_divergence(&mag, &tgt);
    assert!(
        m.final_divergence <= 0.25 * baseline,
        "{} vs baseline {baseline}",
        m.final_divergence
    );
    assert!(m.final_divergence <= m.initial_divergence);
}

#[test]
fn single_grain_target_selects_its_neighborhood() {
    let dict = small_dictionary(&music_like(1.0, 120.0, 2, SAMPLE_RATE));
    let cfg = MusaicConfig::default();
    let j = dict.block(2).start + 10;
    let target = stft_spec(dict.spec.values.slice(s![.., j..j + 1]).to_owned());
    let m = musaic_track(&dict, &dict, &target, &cfg, 3).unwrap();
    let col = m.activations.column(0);
    let near: f64 = (j - cfg.repeat_radius..=j + cfg.repeat_radius).map(|g| col[g]).sum();
    assert!(near >= 0.5 * col.sum(), "{near} of {}", col.sum());
}

#[test]
fn final_columns_respect_the_polyphony_budget() {
    let dict = small_dictionary(&chord(&[220.0, 330.0], 0.6, SAMPLE_RATE));
    let target = stft(&chord(&[247.0, 370.0], 0.5, SAMPLE_RATE), &StftConfig::default()).unwrap();
    let cfg = MusaicConfig {
        iterations: 6,
        polyphony: 3,
        continuity: 1,
        ..MusaicConfig::default()
    };
    let m = musaic_track(&dict, &dict, &target, &cfg, 0).unwrap();
    let budget = cfg.polyphony * (2 * cfg.continuity + 1);
    for col in m.activations.columns() {
        assert!(col.iter().filter(|&&v| v != 0.0).count() <= budget);
        assert!(col.iter().all(|&v| v >= 0.0));
    }
    assert_eq!(m.divergence.len(), 6);
}

#[test]
fn unconstrained_single_iteration_is_a_plain_update() {
    let dict = small_dictionary(&chord(&[220.0], 0.3, SAMPLE_RATE));
    let target = stft(&chord(&[262.0], 0.2, SAMPLE_RATE), &StftConfig::default()).unwrap();
    let cfg = MusaicConfig {
        repeat_radius: 0,
        polyphony: dict.grains(),
        continuity: 0,
        iterations: 1,
        ..MusaicConfig::default()
    };
    let seed = 11;
    let m = musaic_track(&dict, &dict, &target, &cfg, seed).unwrap();
    // documented initialization: uniform on (0.1, 1] from the seeded stream
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h0 = Array2::from_shape_simple_fn((dict.grains(), target.frames()), || 1.0 - 0.9 * rng.random::<f64>());
    let mag = dict.spec.values.mapv(|c| c.norm());
    let tgt = target.values.mapv(|c| c.norm());
    let expect = naive_kl_step(&h0, &mag, &tgt, cfg.epsilon);
    for (a, b) in m.activations.iter().zip(expect.iter()) {
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-12), "{a} vs {b}");
    }
}

#[test]
fn divergence_does_not_grow_on_music() {
    let dict = small_dictionary(&music_like(1.0, 120.0, 5, SAMPLE_RATE));
    let dict_prime = small_dictionary(&music_like(1.0, 120.0, 6, SAMPLE_RATE));
    let target = stft(&music_like(1.0, 120.0, 7, SAMPLE_RATE), &StftConfig::default()).unwrap();
    let m = musaic_track(
        &dict,
        &dict_prime,
        &target,
        &MusaicConfig {
            iterations: 20,
            ..Default::default()
        },
        2,
    )
    .unwrap();
    assert!(m.final_divergence <= m.initial_divergence);
    assert_eq!(m.spec.frames(), target.frames());
    assert!(m.spec.values.iter().all(|c| c.re.is_finite() && c.im.is_finite()));
}

#[test]
fn mismatched_dictionaries_are_rejected() {
    let a = small_dictionary(&chord(&[220.0], 0.3, SAMPLE_RATE));
    let b = small_dictionary(&chord(&[220.0], 0.4, SAMPLE_RATE));
    let target = stft(&chord(&[262.0], 0.2, SAMPLE_RATE), &StftConfig::default()).unwrap();
    assert!(musaic_track(&a, &b, &target, &MusaicConfig::default(), 0).is_err());
    let bad = MusaicConfig {
        polyphony: 0,
        ..Default::default()
    };
    assert!(musaic_track(&a, &a, &target, &bad, 0).is_err());
}

#[test]
fn mixing_is_linear() {
    let cfg = StftConfig::default();
    let x = stft(&chord(&[300.0, 500.0], 0.5, SAMPLE_RATE), &cfg).unwrap();
    let single = mix_tracks(std::slice::from_ref(&x)).unwrap();
    assert_eq!(single, istft(&x, &cfg).unwrap());
    let mut neg = x.clone();
    neg.values.mapv_inplace(|c| -c);
    let silence = mix_tracks(&[x.clone(), neg]).unwrap();
    assert!(silence.peak() <= 1e-6);
    assert_eq!(silence.len(), single.len());
}

#[test]
fn disjoint_bands_both_survive_the_mix() {
    let cfg = StftConfig::default();
    let low = stft(&tone(300.0, 0.5, SAMPLE_RATE), &cfg).unwrap();
    let high = stft(&tone(3000.0, 0.5, SAMPLE_RATE), &cfg).unwrap();
    let mix = mix_tracks(&[low, high]).unwrap();
    let spec = stft(&mix, &cfg).unwrap().values.mapv(|c| c.norm_sqr());
    let bin_hz = SAMPLE_RATE as f64 / cfg.window_size as f64;
    let band = |f: f64| {
        let b = (f / bin_hz).round() as usize;
        spec.slice(s![b - 2..=b + 2, ..]).sum()
    };
    let total = spec.sum();
    assert!(band(300.0) > 0.3 * total && band(3000.0) > 0.3 * total);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constraints_keep_activations_nonnegative(
        rows in 1usize..20, cols in 1usize..20, seed in any::<u64>(),
        r in 0usize..4, p in 1usize..6, c in 0usize..4, iter in 0usize..10,
    ) {
        let h = random_matrix(rows, cols, seed);
        let out = promote_continuity(
            restrict_polyphony(restrict_repeats(h.view(), r, iter, 10).view(), p, iter, 10).view(),
            c,
        );
        prop_assert!(out.iter().all(|&v| v >= 0.0 && v.is_finite()));
        // the suppressed entries only ever shrink
        let rr = restrict_repeats(h.view(), r, iter, 10);
        prop_assert!(rr.iter().zip(h.iter()).all(|(a, b)| a <= b));
    }
}

//! Deterministic synthetic signals and planted factorizations for tests,
//! examples and the acceptance suite.

use std::f64::consts::PI;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::AudioClip;
use crate::nmf2d::{reconstruct, ActivationTensor, TemplateTensor};

/// Planted two-song factorization with an exact solution.
#[derive(Debug, Clone)]
pub struct PlantedPair {
    pub w1: TemplateTensor,
    pub w2: TemplateTensor,
    pub h1: ActivationTensor,
    /// Side of the square canvas holding each pattern.
    pub canvas: usize,
}

impl PlantedPair {
    /// Blurs every pattern `passes` times with a separable `[1, 2, 1] / 4`
    /// kernel, clipped to the pattern canvas. One-pixel patterns leave the
    /// KL updates many sharp local minima; blurred ones are recovered
    /// reliably.
    pub fn smoothed(mut self, passes: usize) -> Self {
        for w in [&mut self.w1.0, &mut self.w2.0] {
            for _ in 0..passes {
                blur_canvas(w, self.canvas);
            }
        }
        self
    }

    /// Both songs' spectrograms, scaled jointly to a peak of 1.
    pub fn targets(&self) -> (Array2<f64>, Array2<f64>) {
        let x1 = reconstruct(&self.w1, &self.h1).expect("planted shapes agree");
        let x2 = reconstruct(&self.w2, &self.h1).expect("planted shapes agree");
        let peak = x1.iter().chain(x2.iter()).fold(0.0f64, |a, &b| a.max(b));
        if peak > 0.0 {
            (x1 / peak, x2 / peak)
        } else {
            (x1, x2)
        }
    }
}

fn blur_canvas(w: &mut Array3<f64>, canvas: usize) {
    const TAPS: [(isize, f64); 3] = [(-1, 0.25), (0, 0.5), (1, 0.25)];
    let src = w.clone();
    let (_, k, t) = w.dim();
    for kk in 0..k {
        for row in 0..canvas {
            for lag in 0..t {
                let mut sum = 0.0;
                for (dr, wr) in TAPS {
                    for (dl, wl) in TAPS {
                        let (r, l) = (row as isize + dr, lag as isize + dl);
                        if r >= 0 && l >= 0 && (r as usize) < canvas && (l as usize) < t {
                            sum += wr * wl * src[[r as usize, kk, l as usize]];
                        }
                    }
                }
                w[[row, kk, lag]] = sum;
            }
        }
    }
}

/// Template pairs on a `size x size` (bin x lag) canvas: a vertical bar
/// paired with a horizontal bar, a rising diagonal with a falling one, and a
/// square outline with a circle.
pub fn paired_patterns(size: usize) -> [(ndarray::Array2<f64>, ndarray::Array2<f64>); 3] {
    use ndarray::Array2;
    let s = size as f64;
    let c = (s - 1.0) / 2.0;
    let mid = size / 2;
    let vertical = Array2::from_shape_fn((size, size), |(_, t)| f64::from(t == mid || t + 1 == mid));
    let horizontal = Array2::from_shape_fn((size, size), |(m, _)| f64::from(m == mid || m + 1 == mid));
    let rising = Array2::from_shape_fn((size, size), |(m, t)| f64::from(m == t));
    let falling = Array2::from_shape_fn((size, size), |(m, t)| f64::from(m + t == size - 1));
    let lo = size / 5;
    let hi = size - 1 - lo;
    let square = Array2::from_shape_fn((size, size), |(m, t)| {
        let on_edge = (m == lo || m == hi) && (lo..=hi).contains(&t) || (t == lo || t == hi) && (lo..=hi).contains(&m);
        f64::from(on_edge)
    });
    let radius = c - lo as f64 + 0.5;
    let circle = Array2::from_shape_fn((size, size), |(m, t)| {
        let d = ((m as f64 - c).powi(2) + (t as f64 - c).powi(2)).sqrt();
        f64::from((d - radius).abs() < 0.75)
    });
    [(vertical, horizontal), (rising, falling), (square, circle)]
}

/// Planted factorization at `m` bins, `n` frames, `t` lags, `f` shifts and
/// three components, using [`paired_patterns`] as templates (occupying the
/// lowest `min(t, m - f + 1)` bins) and `impulses` activation spikes per
/// component at seeded random positions.
pub fn planted_pair(m: usize, n: usize, t: usize, f: usize, impulses: usize, seed: u64) -> PlantedPair {
    let size = t.min(m + 1 - f);
    let patterns = paired_patterns(size);
    let mut w1 = Array3::zeros((m, 3, t));
    let mut w2 = Array3::zeros((m, 3, t));
    for (k, (a, b)) in patterns.iter().enumerate() {
        for row in 0..size {
            for lag in 0..size {
                w1[[row, k, lag]] = a[[row, lag]];
                w2[[row, k, lag]] = b[[row, lag]];
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = Array3::zeros((3, n, f));
    for k in 0..3 {
        for _ in 0..impulses {
            let frame = rng.random_range(0..n.saturating_sub(t).max(1));
            let shift = rng.random_range(0..f);
            h[[k, frame, shift]] = 0.5 + rng.random::<f64>();
        }
    }
    PlantedPair {
        w1: TemplateTensor(w1),
        w2: TemplateTensor(w2),
        h1: ActivationTensor(h),
        canvas: size,
    }
}

/// Unit-amplitude sine.
pub fn tone(freq: f64, seconds: f64, sample_rate: u32) -> AudioClip {
    let n = (seconds * sample_rate as f64).round() as usize;
    let w = 2.0 * PI * freq / sample_rate as f64;
    AudioClip::new((0..n).map(|i| (w * i as f64).sin()).collect(), sample_rate).expect("finite")
}

/// Sum of unit sines, scaled to peak at most 1.
pub fn chord(freqs: &[f64], seconds: f64, sample_rate: u32) -> AudioClip {
    let n = (seconds * sample_rate as f64).round() as usize;
    let scale = 1.0 / freqs.len().max(1) as f64;
    let samples = (0..n)
        .map(|i| {
            freqs
                .iter()
                .map(|f| (2.0 * PI * f * i as f64 / sample_rate as f64).sin())
                .sum::<f64>()
                * scale
        })
        .collect();
    AudioClip::new(samples, sample_rate).expect("finite")
}

/// Uniform white noise in [-amplitude, amplitude].
pub fn white_noise(seconds: f64, amplitude: f64, seed: u64, sample_rate: u32) -> AudioClip {
    let n = (seconds * sample_rate as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n).map(|_| amplitude * (2.0 * rng.random::<f64>() - 1.0)).collect();
    AudioClip::new(samples, sample_rate).expect("finite")
}

/// Exponentially decaying noise bursts (clicks) at `bpm`, starting at
/// `offset` seconds.
pub fn click_track(bpm: f64, seconds: f64, offset: f64, sample_rate: u32) -> AudioClip {
    let n = (seconds * sample_rate as f64).round() as usize;
    let mut samples = vec![0.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let period = 60.0 / bpm;
    let decay = 0.004 * sample_rate as f64;
    let len = (0.03 * sample_rate as f64) as usize;
    let mut t = offset;
    while t < seconds {
        let start = (t * sample_rate as f64).round() as usize;
        for i in 0..len {
            if start + i >= n {
                break;
            }
            samples[start + i] += (2.0 * rng.random::<f64>() - 1.0) * (-(i as f64) / decay).exp();
        }
        t += period;
    }
    AudioClip::new(samples, sample_rate).expect("finite")
}

/// Click onsets in seconds, matching [`click_track`].
pub fn click_times(bpm: f64, seconds: f64, offset: f64) -> Vec<f64> {
    let period = 60.0 / bpm;
    (0..)
        .map(|i| offset + i as f64 * period)
        .take_while(|&t| t < seconds)
        .collect()
}

/// Deterministic music-like signal: a drum pattern (kick, snare, hi-hat) and
/// a harmonic bass and lead line following a chord progression, all at
/// `bpm`. `seed` varies the melody and noise.
pub fn music_like(seconds: f64, bpm: f64, seed: u64, sample_rate: u32) -> AudioClip {
    let sr = sample_rate as f64;
    let n = (seconds * sr).round() as usize;
    let mut out = vec![0.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beat = 60.0 / bpm;
    let eighth = beat / 2.0;
    // A minor, F, C, G as MIDI roots
    let roots = [57.0, 53.0, 48.0, 55.0];
    let scale = [0.0, 2.0, 3.0, 5.0, 7.0, 8.0, 10.0, 12.0];
    let midi = |p: f64| 440.0 * 2f64.powf((p - 69.0) / 12.0);

    let mut add = |start: f64, len: f64, f: &dyn Fn(f64) -> f64| {
        let a = (start * sr) as usize;
        let b = (((start + len) * sr) as usize).min(n);
        for (i, slot) in out.iter_mut().enumerate().take(b).skip(a) {
            *slot += f((i - a) as f64 / sr);
        }
    };

    let eighths = (seconds / eighth).ceil() as usize;
    for e in 0..eighths {
        let t0 = e as f64 * eighth;
        let bar = e / 8;
        let root = roots[bar % roots.len()];
        let pos = e % 8;
        if pos == 0 || pos == 4 {
            add(t0, 0.25, &|t| {
                0.6 * (2.0 * PI * (50.0 + 60.0 * (-t * 30.0).exp()) * t).sin() * (-t * 12.0).exp()
            });
        }
        if pos == 2 || pos == 6 {
            let seed_noise: Vec<f64> = (0..(0.2 * sr) as usize)
                .map(|_| 2.0 * rng.random::<f64>() - 1.0)
                .collect();
            add(t0, 0.2, &|t| {
                let i = ((t * sr) as usize).min(seed_noise.len() - 1);
                (0.3 * seed_noise[i] + 0.2 * (2.0 * PI * 190.0 * t).sin()) * (-t * 20.0).exp()
            });
        }
        let hat: Vec<f64> = (0..(0.05 * sr) as usize)
            .map(|_| 2.0 * rng.random::<f64>() - 1.0)
            .collect();
        add(t0, 0.05, &|t| {
            let i = ((t * sr) as usize).min(hat.len() - 1);
            0.08 * hat[i] * (-t * 80.0).exp()
        });
        if pos % 2 == 0 {
            let f0 = midi(root - 12.0);
            add(t0, beat, &|t| {
                let env = (-t * 3.0).exp() * (1.0 - (-t * 200.0).exp());
                0.25 * env * ((2.0 * PI * f0 * t).sin() + 0.5 * (4.0 * PI * f0 * t).sin())
            });
        }
        let note = root + 12.0 + scale[rng.random_range(0..scale.len())];
        let f0 = midi(note);
        add(t0, eighth, &|t| {
            let env = (-t * 6.0).exp() * (1.0 - (-t * 300.0).exp());
            0.15 * env
                * (1..=5)
                    .map(|h| (2.0 * PI * f0 * h as f64 * t).sin() / h as f64)
                    .sum::<f64>()
        });
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.9 / peak);
    }
    AudioClip::new(out, sample_rate).expect("finite")
}

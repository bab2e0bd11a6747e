//! Constrained NMF musaicing: rebuild a target track from pitch-shifted
//! grains of a source track, then swap in the grains of a paired source.

mod constraints;

use ndarray::{concatenate, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use constraints::{decay, kl_update, promote_continuity, restrict_polyphony, restrict_repeats};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::linalg::par_dot;
use crate::spectral::{istft, pitch_shift, stft, ComplexSpectrogram, Layout, StftConfig};

/// Pitch shifts in halfsteps, in dictionary block order.
pub const SHIFTS: std::ops::RangeInclusive<i32> = -6..=6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MusaicConfig {
    pub repeat_radius: usize,
    pub polyphony: usize,
    pub continuity: usize,
    pub iterations: usize,
    pub epsilon: f64,
}

impl Default for MusaicConfig {
    fn default() -> Self {
        Self {
            repeat_radius: 3,
            polyphony: 10,
            continuity: 3,
            iterations: 100,
            epsilon: 1e-10,
        }
    }
}

impl MusaicConfig {
    pub fn validate(&self) -> Result<()> {
        if self.polyphony == 0 || self.iterations == 0 {
            return Err(Error::InvalidConfig(
                "musaicing polyphony and iterations must be at least 1".into(),
            ));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::InvalidConfig("musaicing epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// STFT of a track followed by the STFTs of its pitch-shifted copies, one
/// block of columns per shift in [`SHIFTS`] order.
#[derive(Debug, Clone)]
pub struct GrainDictionary {
    pub spec: ComplexSpectrogram,
    /// Columns per shift block.
    pub block_frames: usize,
}

impl GrainDictionary {
    pub fn grains(&self) -> usize {
        self.spec.frames()
    }

    /// Columns of the block for `shift` halfsteps.
    pub fn block(&self, shift: i32) -> std::ops::Range<usize> {
        let b = (shift - SHIFTS.start()) as usize;
        b * self.block_frames..(b + 1) * self.block_frames
    }
}

pub fn build_dictionary(track: &AudioClip, cfg: &StftConfig) -> Result<GrainDictionary> {
    let mut blocks = Vec::new();
    let mut layout = None;
    for s in SHIFTS {
        let shifted = if s == 0 { track.clone() } else { pitch_shift(track, s)? };
        let spec = stft(&shifted, cfg)?;
        blocks.push(spec.values);
        layout.get_or_insert((spec.layout, spec.signal_len, spec.sample_rate));
    }
    let block_frames = blocks[0].ncols();
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let values = concatenate(Axis(1), &views).expect("equal block heights");
    let (layout, signal_len, sample_rate) = layout.expect("at least one shift");
    Ok(GrainDictionary {
        spec: ComplexSpectrogram {
            values,
            residual: Array2::zeros((0, block_frames * SHIFTS.count())),
            layout,
            signal_len,
            sample_rate,
        },
        block_frames,
    })
}

/// Output of [`musaic_track`].
#[derive(Debug, Clone)]
pub struct Musaic {
    /// Target rebuilt from the paired dictionary.
    pub spec: ComplexSpectrogram,
    /// Final activations, grains x target frames.
    pub activations: Array2<f64>,
    /// `KL(|target| || |dict| C)` of the constrained activations `C` at each
    /// iteration.
    pub divergence: Vec<f64>,
    /// `KL(|target| || |dict| H)` for the initial and final activations.
    pub initial_divergence: f64,
    pub final_divergence: f64,
}

/// Fits nonnegative activations `H` so that `|dict_a| H` approximates
/// `|target|` under the repeat, polyphony and continuity constraints, then
/// returns `dict_a_prime * H` with the complex grains of the paired
/// dictionary.
pub fn musaic_track(
    dict_a: &GrainDictionary,
    dict_a_prime: &GrainDictionary,
    target: &ComplexSpectrogram,
    cfg: &MusaicConfig,
    seed: u64,
) -> Result<Musaic> {
    cfg.validate()?;
    if dict_a.spec.values.dim() != dict_a_prime.spec.values.dim() || dict_a.block_frames != dict_a_prime.block_frames {
        return Err(Error::shape(
            "paired dictionaries",
            format!("{:?}", dict_a.spec.values.dim()),
            format!("{:?}", dict_a_prime.spec.values.dim()),
        ));
    }
    if dict_a.spec.layout != target.layout || target.bins() != dict_a.spec.bins() {
        return Err(Error::shape(
            "musaicing target",
            format!("{} bins with the dictionary's transform", dict_a.spec.bins()),
            format!("{} bins", target.bins()),
        ));
    }
    let dict = dict_a.spec.values.mapv(|c| c.norm());
    let tgt = target.values.mapv(|c| c.norm());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = Array2::from_shape_simple_fn((dict.ncols(), tgt.ncols()), || 1.0 - 0.9 * rng.random::<f64>());
    let initial_divergence = crate::nmf2d::kl_divergence(tgt.view(), par_dot(dict.view(), h.view()).view())?;
    let mut divergence = Vec::with_capacity(cfg.iterations);
    for iter in 0..cfg.iterations {
        // intermediates are dropped as soon as they are consumed; at default
        // sizes each one is a few hundred megabytes
        constraints::restrict_repeats_in_place(&mut h, cfg.repeat_radius, iter, cfg.iterations);
        constraints::restrict_polyphony_in_place(&mut h, cfg.polyphony, iter, cfg.iterations);
        let c = promote_continuity(h.view(), cfg.continuity);
        drop(h);
        let (next, kl) = kl_update(c.view(), dict.view(), tgt.view(), cfg.epsilon)?;
        drop(c);
        if !kl.is_finite() || next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                stage: "musaicing",
                iteration: iter + 1,
            });
        }
        divergence.push(kl);
        h = next;
        // keep vanishing activations out of the subnormal range
        h.mapv_inplace(|v| if v < 1e-150 { 0.0 } else { v });
    }
    let final_divergence = crate::nmf2d::kl_divergence(tgt.view(), par_dot(dict.view(), h.view()).view())?;
    let re = par_dot(dict_a_prime.spec.values.mapv(|c| c.re).view(), h.view());
    let im = par_dot(dict_a_prime.spec.values.mapv(|c| c.im).view(), h.view());
    let values = ndarray::Zip::from(&re)
        .and(&im)
        .map_collect(|&a, &b| Complex64::new(a, b));
    Ok(Musaic {
        spec: ComplexSpectrogram {
            values,
            residual: Array2::zeros((0, target.frames())),
            layout: target.layout.clone(),
            signal_len: target.signal_len,
            sample_rate: target.sample_rate,
        },
        activations: h,
        divergence,
        initial_divergence,
        final_divergence,
    })
}

/// Sums STFT tracks and inverts the mix.
pub fn mix_tracks(tracks: &[ComplexSpectrogram]) -> Result<AudioClip> {
    let total = ComplexSpectrogram::sum(tracks)?;
    match total.layout {
        Layout::Stft(cfg) => istft(&total, &cfg),
        Layout::Cqt(_) => Err(Error::InvalidConfig("mixing expects STFT tracks".into())),
    }
}

/// Plain-text per-iteration divergence log.
pub fn divergence_log(m: &Musaic) -> String {
    let mut out = String::from("iteration, divergence\n");
    out.push_str(&format!("0, {:e}\n", m.initial_divergence));
    for (i, v) in m.divergence.iter().enumerate() {
        out.push_str(&format!("{}, {v:e}\n", i + 1));
    }
    out.push_str(&format!("final, {:e}\n", m.final_divergence));
    out
}

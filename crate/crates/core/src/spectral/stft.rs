use ndarray::Array2;
use realfft::RealFftPlanner;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::spectrogram::{ComplexSpectrogram, Layout};
use super::window::Window;
use crate::audio::AudioClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_size: usize,
    pub hop_size: usize,
    pub window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_size: 2048,
            hop_size: 256,
            window: Window::Hann,
        }
    }
}

impl StftConfig {
    pub fn new(window_size: usize, hop_size: usize) -> Result<Self> {
        let cfg = Self {
            window_size,
            hop_size,
            window: Window::Hann,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size < 2 || !self.window_size.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "window size must be even and >= 2, got {}",
                self.window_size
            )));
        }
        if self.hop_size == 0 || self.hop_size > self.window_size {
            return Err(Error::InvalidConfig(format!(
                "hop size must be in 1..={}, got {}",
                self.window_size, self.hop_size
            )));
        }
        let ripple = self.window.overlap_ripple(self.window_size, self.hop_size);
        if (ripple - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "{:?} window of {} is not overlap-add constant at hop {}",
                self.window, self.window_size, self.hop_size
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.window_size / 2 + 1
    }

    /// Frames produced for a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        len / self.hop_size + 1
    }
}

/// Short-time Fourier transform. The signal is reflection-padded by half a
/// window on each side so that frame `k` is centered on sample `k * hop`.
pub fn stft(clip: &AudioClip, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    let x = clip.samples();
    if x.len() < cfg.window_size {
        return Err(Error::ShortInput {
            needed: cfg.window_size,
            got: x.len(),
        });
    }
    let half = cfg.window_size / 2;
    let mut padded = Vec::with_capacity(x.len() + cfg.window_size);
    padded.extend((1..=half).rev().map(|i| x[i]));
    padded.extend_from_slice(x);
    padded.extend((0..half).map(|i| x[x.len() - 2 - i]));
    let values = analyze_frames(&padded, cfg, cfg.frame_count(x.len()));
    Ok(ComplexSpectrogram {
        values,
        residual: Array2::zeros((0, cfg.frame_count(x.len()))),
        layout: Layout::Stft(*cfg),
        signal_len: x.len(),
        sample_rate: clip.sample_rate(),
    })
}

/// Inverse STFT by least-squares weighted overlap-add.
pub fn istft(spec: &ComplexSpectrogram, cfg: &StftConfig) -> Result<AudioClip> {
    cfg.validate()?;
    if spec.bins() != cfg.bins() {
        return Err(Error::shape("istft bins", cfg.bins(), spec.bins()));
    }
    let full = overlap_add(&spec.values, cfg);
    let half = cfg.window_size / 2;
    let out = (0..spec.signal_len)
        .map(|i| full.get(half + i).copied().unwrap_or(0.0))
        .collect();
    Ok(AudioClip::from_parts(out, spec.sample_rate))
}

/// Frames starting at `k * hop` of an already padded signal, windowed and
/// transformed. Samples past the end are treated as zero.
pub(crate) fn analyze_frames(signal: &[f64], cfg: &StftConfig, frames: usize) -> Array2<Complex64> {
    let w = cfg.window_size;
    let win = cfg.window.coefficients(w);
    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(w);
    let mut input = fft.make_input_vec();
    let mut output = fft.make_output_vec();
    let mut scratch = fft.make_scratch_vec();
    let mut values = Array2::zeros((cfg.bins(), frames));
    for k in 0..frames {
        let start = k * cfg.hop_size;
        for (n, slot) in input.iter_mut().enumerate() {
            *slot = signal.get(start + n).copied().unwrap_or(0.0) * win[n];
        }
        fft.process_with_scratch(&mut input, &mut output, &mut scratch)
            .expect("fft buffer sizes");
        values.column_mut(k).assign(&ndarray::ArrayView1::from(&output[..]));
    }
    values
}

/// Weighted overlap-add of inverse-transformed frames, normalized by the
/// squared-window sum. Returns `(frames - 1) * hop + window` samples.
pub(crate) fn overlap_add(values: &Array2<Complex64>, cfg: &StftConfig) -> Vec<f64> {
    let w = cfg.window_size;
    let frames = values.ncols();
    if frames == 0 {
        return Vec::new();
    }
    let win = cfg.window.coefficients(w);
    let len = (frames - 1) * cfg.hop_size + w;
    let mut out = vec![0.0; len];
    let mut norm = vec![0.0; len];
    let mut planner = RealFftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(w);
    let mut spec = ifft.make_input_vec();
    let mut frame = ifft.make_output_vec();
    let mut scratch = ifft.make_scratch_vec();
    let scale = 1.0 / w as f64;
    for k in 0..frames {
        for (slot, v) in spec.iter_mut().zip(values.column(k).iter()) {
            *slot = *v;
        }
        // A real signal has purely real DC and Nyquist bins.
        spec[0].im = 0.0;
        let last = spec.len() - 1;
        spec[last].im = 0.0;
        ifft.process_with_scratch(&mut spec, &mut frame, &mut scratch)
            .expect("fft buffer sizes");
        let start = k * cfg.hop_size;
        for n in 0..w {
            out[start + n] += frame[n] * scale * win[n];
            norm[start + n] += win[n] * win[n];
        }
    }
    for (o, z) in out.iter_mut().zip(&norm) {
        *o = if *z > 1e-10 { *o / z } else { 0.0 };
    }
    out
}

//! Invertible constant-Q transform.
//!
//! The transform is a nonstationary Gabor frame computed on the whole
//! signal at once: the spectrum of the zero-padded signal is split by
//! overlapping half-Hann windows centered on geometrically spaced
//! frequencies, and each band is brought back to the time domain with an
//! inverse FFT of a common length. Every band then has the same number of
//! coefficients, so the result is an ordinary matrix. Because the common
//! length is at least the support of the widest window (the painless
//! condition), the frame operator is diagonal in frequency and the
//! canonical dual inverts it exactly.
//!
//! The common time step is a fraction `1/downsample` of the configured frame
//! period; [`ComplexSpectrogram::coarse_magnitude`] averages back to the frame
//! period for factorization.

use std::sync::Arc;

use ndarray::Array2;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::spectrogram::{ComplexSpectrogram, Layout};
use crate::audio::AudioClip;
use crate::error::{Error, Result};

/// Zero padding appended before the transform so that the circular
/// convolution does not wrap transients from the end onto the start.
const TAIL_PAD: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CqtConfig {
    pub bins_per_octave: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Seconds between coarse frames.
    pub frame_period: f64,
}

impl Default for CqtConfig {
    fn default() -> Self {
        Self {
            bins_per_octave: 24,
            f_min: 50.0,
            f_max: 11700.0,
            frame_period: 0.0065,
        }
    }
}

impl CqtConfig {
    pub fn total_bins(&self) -> usize {
        let octaves = (self.f_max / self.f_min).log2();
        (self.bins_per_octave as f64 * octaves - 1e-9).ceil() as usize
    }

    pub fn center_frequencies(&self) -> Vec<f64> {
        let b = self.bins_per_octave as f64;
        (0..self.total_bins())
            .map(|k| self.f_min * 2f64.powf(k as f64 / b))
            .collect()
    }

    /// Coarse frame period in samples.
    pub fn frame_samples(&self, sample_rate: u32) -> usize {
        ((self.frame_period * sample_rate as f64).round() as usize).max(1)
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.bins_per_octave == 0 {
            return Err(Error::InvalidConfig("bins_per_octave must be positive".into()));
        }
        if !(self.f_min > 0.0 && self.f_max > self.f_min) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < f_min < f_max, got {} and {}",
                self.f_min, self.f_max
            )));
        }
        if !(self.frame_period > 0.0 && self.frame_period.is_finite()) {
            return Err(Error::InvalidConfig("frame_period must be positive".into()));
        }
        let nyquist = sample_rate as f64 / 2.0;
        // Bands whose centers lie a few bins past Nyquist are kept (they are
        // truncated or empty); anything further is a configuration error.
        let limit = nyquist * 2f64.powf(3.0 / self.bins_per_octave as f64);
        if self.f_min >= nyquist || self.f_max > limit {
            return Err(Error::InvalidConfig(format!(
                "frequency range {}..{} Hz exceeds Nyquist {} Hz",
                self.f_min, self.f_max, nyquist
            )));
        }
        Ok(())
    }
}

/// Geometry of one CQT analysis, stored with the coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CqtLayout {
    pub cfg: CqtConfig,
    pub sample_rate: u32,
    /// Length of the zero-padded signal the spectrum is taken over.
    pub fft_len: usize,
    /// Coefficients per band.
    pub fine_frames: usize,
    /// Fine frames per coarse frame.
    pub downsample: usize,
    pub has_high_band: bool,
}

impl CqtLayout {
    pub fn coarse_frames(&self) -> usize {
        self.fine_frames / self.downsample
    }

    /// Seconds between fine frames.
    pub fn fine_hop_seconds(&self) -> f64 {
        self.fft_len as f64 / self.fine_frames as f64 / self.sample_rate as f64
    }
}

struct Band {
    start: usize,
    gains: Vec<f64>,
}

/// Precomputed windows and FFT plans for one signal length.
pub struct CqtPlan {
    layout: CqtLayout,
    bands: Vec<Band>,
    inv_frame_diag: Vec<f64>,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
    band_fft: Arc<dyn Fft<f64>>,
    band_ifft: Arc<dyn Fft<f64>>,
    signal_len: usize,
}

fn is_smooth(mut n: usize) -> bool {
    for p in [2, 3, 5, 7] {
        while n.is_multiple_of(p) {
            n /= p;
        }
    }
    n == 1
}

fn rise(f: f64, lo: f64, hi: f64) -> f64 {
    let t = ((f - lo) / (hi - lo)).clamp(0.0, 1.0);
    (0.5 * std::f64::consts::PI * t).sin().powi(2)
}

fn fall(f: f64, lo: f64, hi: f64) -> f64 {
    let t = ((f - lo) / (hi - lo)).clamp(0.0, 1.0);
    (0.5 * std::f64::consts::PI * t).cos().powi(2)
}

impl CqtPlan {
    pub fn new(cfg: &CqtConfig, sample_rate: u32, signal_len: usize) -> Result<Self> {
        cfg.validate(sample_rate)?;
        if signal_len == 0 {
            return Err(Error::ShortInput { needed: 1, got: 0 });
        }
        let frame = cfg.frame_samples(sample_rate);
        let mut q = (signal_len + TAIL_PAD).div_ceil(frame);
        while !q.is_multiple_of(2) || !is_smooth(q) {
            q += 1;
        }
        let fft_len = frame * q;
        let nyq_bin = fft_len / 2;
        let sr = sample_rate as f64;
        let to_hz = |nu: usize| nu as f64 * sr / fft_len as f64;

        let centers = cfg.center_frequencies();
        let ratio = 2f64.powf(1.0 / cfg.bins_per_octave as f64);
        let edge = |k: isize| -> f64 {
            if k < 0 {
                centers[0] / ratio
            } else if k as usize >= centers.len() {
                centers[centers.len() - 1] * ratio
            } else {
                centers[k as usize]
            }
        };

        let mut bands = Vec::with_capacity(centers.len() + 2);
        let collect = |lo: f64, hi: f64, gain: &dyn Fn(f64) -> f64| -> Band {
            let first = ((lo * fft_len as f64 / sr).floor().max(0.0)) as usize;
            let last = ((hi * fft_len as f64 / sr).ceil() as usize).min(nyq_bin);
            let mut start = usize::MAX;
            let mut gains = Vec::new();
            for nu in first..=last {
                let g = gain(to_hz(nu));
                if g > 0.0 {
                    if start == usize::MAX {
                        start = nu;
                    }
                    // fill any interior zero so the support stays contiguous
                    gains.resize(nu - start, 0.0);
                    gains.push(g);
                }
            }
            Band {
                start: if start == usize::MAX { 0 } else { start },
                gains,
            }
        };

        for k in 0..centers.len() as isize {
            let (lo, c, hi) = (edge(k - 1), edge(k), edge(k + 1));
            bands.push(collect(lo, hi, &|f| {
                if f <= lo || f >= hi {
                    0.0
                } else if f < c {
                    rise(f, lo, c)
                } else {
                    fall(f, c, hi)
                }
            }));
        }
        let (low_lo, low_hi) = (edge(-1), edge(0));
        bands.push(collect(0.0, low_hi, &|f| {
            if f <= low_lo {
                1.0
            } else {
                fall(f, low_lo, low_hi)
            }
        }));
        let top = edge(centers.len() as isize);
        let has_high_band = top < sr / 2.0;
        if has_high_band {
            let last_center = edge(centers.len() as isize - 1);
            bands.push(collect(last_center, sr / 2.0, &|f| {
                if f <= last_center {
                    0.0
                } else {
                    rise(f, last_center, top)
                }
            }));
        }

        let max_support = bands.iter().map(|b| b.gains.len()).max().unwrap_or(1).max(1);
        let downsample = max_support.div_ceil(q).max(1);
        let fine_frames = downsample * q;

        let scale = 2.0 * fine_frames as f64 / fft_len as f64;
        let mut diag = vec![0.0; nyq_bin + 1];
        for b in &bands {
            for (i, g) in b.gains.iter().enumerate() {
                diag[b.start + i] += g * g;
            }
        }
        let inv_frame_diag = diag
            .iter()
            .map(|&d| {
                debug_assert!(d > 0.0, "frequency not covered by any band");
                if d > 0.0 {
                    1.0 / (scale * d)
                } else {
                    0.0
                }
            })
            .collect();

        let mut rplanner = RealFftPlanner::<f64>::new();
        let mut cplanner = FftPlanner::<f64>::new();
        Ok(Self {
            layout: CqtLayout {
                cfg: *cfg,
                sample_rate,
                fft_len,
                fine_frames,
                downsample,
                has_high_band,
            },
            forward: rplanner.plan_fft_forward(fft_len),
            inverse: rplanner.plan_fft_inverse(fft_len),
            band_fft: cplanner.plan_fft_forward(fine_frames),
            band_ifft: cplanner.plan_fft_inverse(fine_frames),
            bands,
            inv_frame_diag,
            signal_len,
        })
    }

    pub fn layout(&self) -> &CqtLayout {
        &self.layout
    }

    fn residual_rows(&self) -> usize {
        if self.layout.has_high_band {
            2
        } else {
            1
        }
    }

    /// Analysis: returns (log-frequency rows, residual rows).
    pub fn forward(&self, signal: &[f64]) -> (Array2<Complex64>, Array2<Complex64>) {
        let n = self.layout.fft_len;
        let m = self.layout.fine_frames;
        let mut input = self.forward.make_input_vec();
        for (slot, v) in input.iter_mut().zip(signal.iter().take(self.signal_len)) {
            *slot = *v;
        }
        let mut spectrum = self.forward.make_output_vec();
        self.forward
            .process(&mut input, &mut spectrum)
            .expect("fft buffer sizes");

        let bins = self.layout.cfg.total_bins();
        let mut values = Array2::zeros((bins, m));
        let mut residual = Array2::zeros((self.residual_rows(), m));
        let norm = 2.0 / n as f64;
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.band_ifft.get_inplace_scratch_len()];
        for (idx, band) in self.bands.iter().enumerate() {
            buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for (i, g) in band.gains.iter().enumerate() {
                let nu = band.start + i;
                buf[nu % m] += spectrum[nu] * (g * norm);
            }
            self.band_ifft.process_with_scratch(&mut buf, &mut scratch);
            let mut row = if idx < bins {
                values.row_mut(idx)
            } else {
                residual.row_mut(idx - bins)
            };
            row.iter_mut().zip(&buf).for_each(|(r, b)| *r = *b);
        }
        (values, residual)
    }

    /// Synthesis with the canonical dual frame.
    pub fn inverse(&self, values: &Array2<Complex64>, residual: &Array2<Complex64>) -> Vec<f64> {
        let n = self.layout.fft_len;
        let m = self.layout.fine_frames;
        let bins = self.layout.cfg.total_bins();
        let mut spectrum = self.inverse.make_input_vec();
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.band_fft.get_inplace_scratch_len()];
        for (idx, band) in self.bands.iter().enumerate() {
            if band.gains.is_empty() {
                continue;
            }
            let row = if idx < bins {
                values.row(idx)
            } else {
                residual.row(idx - bins)
            };
            buf.iter_mut().zip(row.iter()).for_each(|(b, r)| *b = *r);
            self.band_fft.process_with_scratch(&mut buf, &mut scratch);
            for (i, g) in band.gains.iter().enumerate() {
                let nu = band.start + i;
                spectrum[nu] += buf[nu % m] * (g * self.inv_frame_diag[nu]);
            }
        }
        spectrum[0].im = 0.0;
        let last = spectrum.len() - 1;
        spectrum[last].im = 0.0;
        let mut out = self.inverse.make_output_vec();
        self.inverse.process(&mut spectrum, &mut out).expect("fft buffer sizes");
        let scale = 1.0 / n as f64;
        out.truncate(self.signal_len);
        out.iter_mut().for_each(|v| *v *= scale);
        out
    }

    pub fn analyze(&self, clip: &AudioClip) -> ComplexSpectrogram {
        let (values, residual) = self.forward(clip.samples());
        ComplexSpectrogram {
            values,
            residual,
            layout: Layout::Cqt(self.layout.clone()),
            signal_len: self.signal_len,
            sample_rate: self.layout.sample_rate,
        }
    }
}

pub fn cqt(clip: &AudioClip, cfg: &CqtConfig) -> Result<ComplexSpectrogram> {
    let plan = CqtPlan::new(cfg, clip.sample_rate(), clip.len())?;
    Ok(plan.analyze(clip))
}

pub fn icqt(spec: &ComplexSpectrogram, cfg: &CqtConfig) -> Result<AudioClip> {
    let layout = match &spec.layout {
        Layout::Cqt(l) => l,
        Layout::Stft(_) => return Err(Error::InvalidConfig("icqt given an STFT spectrogram".into())),
    };
    if layout.cfg != *cfg || spec.bins() != cfg.total_bins() {
        return Err(Error::shape("icqt bins", cfg.total_bins(), spec.bins()));
    }
    let plan = CqtPlan::new(cfg, spec.sample_rate, spec.signal_len)?;
    if plan.layout != *layout || spec.frames() != layout.fine_frames {
        return Err(Error::shape("icqt frames", layout.fine_frames, spec.frames()));
    }
    let expected_residual = plan.residual_rows();
    if spec.residual.nrows() != expected_residual || spec.residual.ncols() != spec.frames() {
        return Err(Error::shape(
            "icqt residual rows",
            expected_residual,
            spec.residual.nrows(),
        ));
    }
    Ok(AudioClip::from_parts(
        plan.inverse(&spec.values, &spec.residual),
        spec.sample_rate,
    ))
}

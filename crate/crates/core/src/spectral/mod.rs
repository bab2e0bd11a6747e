//! Time-frequency transforms: STFT, invertible CQT, Griffin-Lim phase
//! retrieval and phase-vocoder time/pitch modification.

pub mod cqt;
pub mod griffin_lim;
pub mod resample;
pub mod spectrogram;
pub mod stft;
pub mod vocoder;
pub mod window;

pub use cqt::{cqt, icqt, CqtConfig, CqtLayout, CqtPlan};
pub use griffin_lim::{griffin_lim, griffin_lim_traced};
pub use spectrogram::{ComplexSpectrogram, Layout, MagnitudeSpectrogram};
pub use stft::{istft, stft, StftConfig};
pub use vocoder::{pitch_shift, time_stretch, time_stretch_map};
pub use window::Window;

/// Signal-to-noise ratio in dB of `estimate` against `reference` over the
/// sample range `[from, to)`.
pub fn snr_db(reference: &[f64], estimate: &[f64], from: usize, to: usize) -> f64 {
    let to = to.min(reference.len()).min(estimate.len());
    let (mut sig, mut err) = (0.0, 0.0);
    for i in from..to {
        sig += reference[i] * reference[i];
        err += (reference[i] - estimate[i]).powi(2);
    }
    if err == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (sig / err).log10()
    }
}

//! Griffin-Lim phase retrieval for STFT and CQT magnitudes.

use ndarray::{Array2, Zip};
use rustfft::num_complex::Complex64;

use super::cqt::CqtPlan;
use super::spectrogram::{Layout, MagnitudeSpectrogram};
use super::stft::{analyze_frames, overlap_add, StftConfig};
use crate::audio::AudioClip;
use crate::error::{Error, Result};

pub const DEFAULT_ITERATIONS: usize = 100;

/// A transform with a least-squares inverse, viewed on an unconstrained
/// signal domain so that `forward(inverse(c))` is an orthogonal projection.
trait Frame {
    fn forward(&self, x: &[f64]) -> (Array2<Complex64>, Array2<Complex64>);
    fn inverse(&self, values: &Array2<Complex64>, residual: &Array2<Complex64>) -> Vec<f64>;
    /// Weight of each main row in the coefficient norm.
    fn row_weight(&self, row: usize) -> f64;
    fn finish(&self, x: Vec<f64>) -> Vec<f64>;
}

struct StftFrame {
    cfg: StftConfig,
    frames: usize,
    signal_len: usize,
}

impl Frame for StftFrame {
    fn forward(&self, x: &[f64]) -> (Array2<Complex64>, Array2<Complex64>) {
        (
            analyze_frames(x, &self.cfg, self.frames),
            Array2::zeros((0, self.frames)),
        )
    }

    fn inverse(&self, values: &Array2<Complex64>, _: &Array2<Complex64>) -> Vec<f64> {
        overlap_add(values, &self.cfg)
    }

    // Interior bins stand for a conjugate pair in the full spectrum.
    fn row_weight(&self, row: usize) -> f64 {
        if row == 0 || row == self.cfg.bins() - 1 {
            1.0
        } else {
            2.0
        }
    }

    fn finish(&self, x: Vec<f64>) -> Vec<f64> {
        let half = self.cfg.window_size / 2;
        (0..self.signal_len)
            .map(|i| x.get(half + i).copied().unwrap_or(0.0))
            .collect()
    }
}

impl Frame for CqtPlan {
    fn forward(&self, x: &[f64]) -> (Array2<Complex64>, Array2<Complex64>) {
        CqtPlan::forward(self, x)
    }

    fn inverse(&self, values: &Array2<Complex64>, residual: &Array2<Complex64>) -> Vec<f64> {
        CqtPlan::inverse(self, values, residual)
    }

    fn row_weight(&self, _: usize) -> f64 {
        1.0
    }

    fn finish(&self, x: Vec<f64>) -> Vec<f64> {
        x
    }
}

/// Phase retrieval from `mag` with `iterations` projection rounds.
pub fn griffin_lim(mag: &MagnitudeSpectrogram, iterations: usize) -> Result<AudioClip> {
    griffin_lim_traced(mag, iterations).map(|(clip, _)| clip)
}

/// Like [`griffin_lim`], also returning the consistency error
/// `|| |T x_i| - mag ||` of the estimate after each iteration.
pub fn griffin_lim_traced(mag: &MagnitudeSpectrogram, iterations: usize) -> Result<(AudioClip, Vec<f64>)> {
    if iterations == 0 {
        return Err(Error::InvalidConfig("griffin-lim needs at least one iteration".into()));
    }
    if mag
        .values
        .iter()
        .chain(mag.residual.iter())
        .any(|&v| v < 0.0 || !v.is_finite())
    {
        return Err(Error::NegativeInput("griffin-lim magnitude"));
    }
    let (x, errors) = match &mag.layout {
        Layout::Stft(cfg) => {
            cfg.validate()?;
            if mag.bins() != cfg.bins() {
                return Err(Error::shape("griffin-lim bins", cfg.bins(), mag.bins()));
            }
            let frame = StftFrame {
                cfg: *cfg,
                frames: mag.frames(),
                signal_len: mag.signal_len,
            };
            run(&frame, mag, iterations)
        }
        Layout::Cqt(layout) => {
            let plan = CqtPlan::new(&layout.cfg, mag.sample_rate, mag.signal_len)?;
            if plan.layout() != layout || mag.values.dim() != (layout.cfg.total_bins(), layout.fine_frames) {
                return Err(Error::shape(
                    "griffin-lim cqt",
                    format!("{:?}", (layout.cfg.total_bins(), layout.fine_frames)),
                    format!("{:?}", mag.values.dim()),
                ));
            }
            let residual = if mag.residual.nrows() == 0 {
                let (_, r) = plan.forward(&[]);
                r.mapv(|_| 0.0)
            } else {
                mag.residual.clone()
            };
            let mag = MagnitudeSpectrogram {
                residual,
                ..mag.clone()
            };
            run(&plan, &mag, iterations)
        }
    };
    Ok((AudioClip::from_parts(x, mag.sample_rate), errors))
}

fn project(coeffs: &Array2<Complex64>, mag: &Array2<f64>) -> Array2<Complex64> {
    Zip::from(coeffs).and(mag).map_collect(|c, &m| {
        let n = c.norm();
        if n > 0.0 {
            c * (m / n)
        } else {
            Complex64::new(m, 0.0)
        }
    })
}

fn consistency_error<F: Frame>(
    frame: &F,
    values: &Array2<Complex64>,
    residual: &Array2<Complex64>,
    mag: &MagnitudeSpectrogram,
) -> f64 {
    let mut acc = 0.0;
    for (r, (vrow, mrow)) in values.outer_iter().zip(mag.values.outer_iter()).enumerate() {
        let w = frame.row_weight(r);
        acc += w * vrow
            .iter()
            .zip(mrow.iter())
            .map(|(c, m)| (c.norm() - m).powi(2))
            .sum::<f64>();
    }
    acc += residual
        .iter()
        .zip(mag.residual.iter())
        .map(|(c, m)| (c.norm() - m).powi(2))
        .sum::<f64>();
    acc.sqrt()
}

fn run<F: Frame>(frame: &F, mag: &MagnitudeSpectrogram, iterations: usize) -> (Vec<f64>, Vec<f64>) {
    let zero_phase = |m: &Array2<f64>| m.mapv(|v| Complex64::new(v, 0.0));
    let mut x = frame.inverse(&zero_phase(&mag.values), &zero_phase(&mag.residual));
    let mut errors = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let (values, residual) = frame.forward(&x);
        errors.push(consistency_error(frame, &values, &residual, mag));
        x = frame.inverse(&project(&values, &mag.values), &project(&residual, &mag.residual));
    }
    // error of the returned estimate
    let (values, residual) = frame.forward(&x);
    errors.push(consistency_error(frame, &values, &residual, mag));
    errors.remove(0);
    (frame.finish(x), errors)
}

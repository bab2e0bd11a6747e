use ndarray::{Array2, Axis};
use rustfft::num_complex::Complex64;

use super::cqt::CqtLayout;
use super::stft::StftConfig;
use crate::error::{Error, Result};

/// Which transform produced a spectrogram, with everything needed to invert it.
#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    Stft(StftConfig),
    Cqt(CqtLayout),
}

/// Complex time-frequency matrix: rows are frequency bins, columns are frames.
///
/// CQT spectrograms also carry `residual` rows (the band below the lowest
/// bin and, when the bins stop short of Nyquist, the band above the highest)
/// that are not part of the log-frequency grid but are needed for exact
/// inversion. STFT spectrograms have no residual rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub values: Array2<Complex64>,
    pub residual: Array2<Complex64>,
    pub layout: Layout,
    pub signal_len: usize,
    pub sample_rate: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrogram {
    pub values: Array2<f64>,
    pub residual: Array2<f64>,
    pub layout: Layout,
    pub signal_len: usize,
    pub sample_rate: u32,
}

impl ComplexSpectrogram {
    pub fn bins(&self) -> usize {
        self.values.nrows()
    }

    pub fn frames(&self) -> usize {
        self.values.ncols()
    }

    pub fn magnitude(&self) -> MagnitudeSpectrogram {
        MagnitudeSpectrogram {
            values: self.values.mapv(|c| c.norm()),
            residual: self.residual.mapv(|c| c.norm()),
            layout: self.layout.clone(),
            signal_len: self.signal_len,
            sample_rate: self.sample_rate,
        }
    }

    /// Same layout, all entries zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            values: Array2::zeros(self.values.raw_dim()),
            residual: Array2::zeros(self.residual.raw_dim()),
            ..self.clone()
        }
    }

    /// Frames per coarse frame: 1 for STFT, the temporal downsampling factor
    /// for CQT.
    pub fn downsample(&self) -> usize {
        match &self.layout {
            Layout::Stft(_) => 1,
            Layout::Cqt(l) => l.downsample,
        }
    }

    /// Magnitude averaged over groups of `downsample()` frames. This is the
    /// matrix the factorization runs on.
    pub fn coarse_magnitude(&self) -> Array2<f64> {
        downsample_mean(&self.values.mapv(|c| c.norm()), self.downsample())
    }

    /// Elementwise sum of spectrograms with identical layout.
    pub fn sum(specs: &[ComplexSpectrogram]) -> Result<ComplexSpectrogram> {
        let first = specs
            .first()
            .ok_or_else(|| Error::InvalidConfig("no spectrograms to sum".into()))?;
        let mut out = first.clone();
        for s in &specs[1..] {
            if s.values.dim() != out.values.dim() || s.residual.dim() != out.residual.dim() {
                return Err(Error::shape(
                    "spectrogram sum",
                    format!("{:?}", out.values.dim()),
                    format!("{:?}", s.values.dim()),
                ));
            }
            out.values += &s.values;
            out.residual += &s.residual;
        }
        Ok(out)
    }
}

impl MagnitudeSpectrogram {
    pub fn bins(&self) -> usize {
        self.values.nrows()
    }

    pub fn frames(&self) -> usize {
        self.values.ncols()
    }
}

/// Averages each row over consecutive groups of `factor` columns; the last
/// group may be shorter.
pub fn downsample_mean(x: &Array2<f64>, factor: usize) -> Array2<f64> {
    if factor <= 1 {
        return x.clone();
    }
    let cols = x.ncols().div_ceil(factor);
    let mut out = Array2::zeros((x.nrows(), cols));
    for (j, chunk) in x.axis_chunks_iter(Axis(1), factor).enumerate() {
        let n = chunk.ncols() as f64;
        for (i, row) in chunk.outer_iter().enumerate() {
            out[[i, j]] = row.sum() / n;
        }
    }
    out
}

/// Linear interpolation of coarse columns back onto a grid `factor` times
/// finer with `fine_cols` columns. Coarse column `j` sits at the center of
/// fine columns `j*factor .. (j+1)*factor`.
pub fn upsample_linear(x: &Array2<f64>, factor: usize, fine_cols: usize) -> Array2<f64> {
    if factor <= 1 && x.ncols() == fine_cols {
        return x.clone();
    }
    let coarse = x.ncols();
    let mut out = Array2::zeros((x.nrows(), fine_cols));
    if coarse == 0 {
        return out;
    }
    let f = factor.max(1) as f64;
    for i in 0..fine_cols {
        let pos = ((i as f64 + 0.5) / f - 0.5).clamp(0.0, (coarse - 1) as f64);
        let j0 = pos.floor() as usize;
        let j1 = (j0 + 1).min(coarse - 1);
        let a = pos - j0 as f64;
        for r in 0..x.nrows() {
            out[[r, i]] = (1.0 - a) * x[[r, j0]] + a * x[[r, j1]];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn downsample_averages_groups() {
        let x = array![[1.0, 3.0, 5.0, 7.0, 9.0]];
        let y = downsample_mean(&x, 2);
        assert_eq!(y, array![[2.0, 6.0, 9.0]]);
    }

    #[test]
    fn upsample_of_constant_is_constant() {
        let x = Array2::from_elem((3, 4), 2.5);
        let y = upsample_linear(&x, 5, 20);
        assert!(y.iter().all(|&v| (v - 2.5).abs() < 1e-15));
    }
}

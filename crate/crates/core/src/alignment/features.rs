//! Beat-synchronous chroma and MFCC features stacked into sliding blocks.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::beats::BeatGrid;
use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::spectral::{cqt, stft, CqtConfig, Layout, StftConfig};

/// Beats per feature block.
pub const DEFAULT_BLOCK_BEATS: usize = 20;

const MEL_BANDS: usize = 40;
const MFCC_COEFFS: usize = 13;
const MEL_LOW_HZ: f64 = 20.0;
const MEL_HIGH_HZ: f64 = 8000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureKind {
    Chroma,
    Mfcc,
}

/// One feature vector per block of consecutive beats (rows).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub kind: FeatureKind,
    pub values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn blocks(&self) -> usize {
        self.values.nrows()
    }
}

/// CQT used for chroma. The range stops at 5 kHz: harmonics above carry
/// little pitch-class information and the lower ceiling keeps the
/// full-length transform small.
pub fn chroma_cqt_config() -> CqtConfig {
    CqtConfig {
        f_max: 5000.0,
        ..CqtConfig::default()
    }
}

/// Pitch class (0 = A) of each CQT bin.
fn pitch_classes(cfg: &CqtConfig) -> Vec<usize> {
    cfg.center_frequencies()
        .iter()
        .map(|f| (12.0 * (f / 440.0).log2()).round().rem_euclid(12.0) as usize)
        .collect()
}

/// Frame-level 12-bin chroma (rows = frames) and the frame hop in seconds.
fn frame_chroma(clip: &AudioClip) -> Result<(Array2<f64>, f64)> {
    let cfg = chroma_cqt_config();
    let spec = cqt(clip, &cfg)?;
    let hop = match &spec.layout {
        Layout::Cqt(l) => l.fine_hop_seconds(),
        Layout::Stft(_) => unreachable!("cqt returns a cqt layout"),
    };
    let classes = pitch_classes(&cfg);
    let mut out = Array2::zeros((spec.frames(), 12));
    for (bin, row) in spec.values.outer_iter().enumerate() {
        let pc = classes[bin];
        for (t, c) in row.iter().enumerate() {
            out[[t, pc]] += c.norm();
        }
    }
    Ok((out, hop))
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank, `bands x bins`.
fn mel_filterbank(bins: usize, sample_rate: u32, window: usize) -> Array2<f64> {
    let lo = hz_to_mel(MEL_LOW_HZ);
    let hi = hz_to_mel(MEL_HIGH_HZ.min(sample_rate as f64 / 2.0));
    let edges: Vec<f64> = (0..MEL_BANDS + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (MEL_BANDS + 1) as f64))
        .collect();
    let mut fb = Array2::zeros((MEL_BANDS, bins));
    for b in 0..MEL_BANDS {
        let (l, c, r) = (edges[b], edges[b + 1], edges[b + 2]);
        for k in 0..bins {
            let f = k as f64 * sample_rate as f64 / window as f64;
            let w = if f > l && f <= c {
                (f - l) / (c - l)
            } else if f > c && f < r {
                (r - f) / (r - c)
            } else {
                0.0
            };
            fb[[b, k]] = w;
        }
    }
    fb
}

/// Frame-level MFCCs (rows = frames) and the frame hop in seconds.
fn frame_mfcc(clip: &AudioClip) -> Result<(Array2<f64>, f64)> {
    let cfg = StftConfig::new(2048, 512)?;
    let spec = stft(clip, &cfg)?;
    let power = spec.values.mapv(|c| c.norm_sqr());
    let fb = mel_filterbank(cfg.bins(), clip.sample_rate(), cfg.window_size);
    let mel = fb.dot(&power).mapv(|v| (v + 1e-10).ln());
    // orthonormal DCT-II over mel bands
    let dct = Array2::from_shape_fn((MFCC_COEFFS, MEL_BANDS), |(c, b)| {
        let scale = if c == 0 {
            (1.0 / MEL_BANDS as f64).sqrt()
        } else {
            (2.0 / MEL_BANDS as f64).sqrt()
        };
        scale * (std::f64::consts::PI * c as f64 * (b as f64 + 0.5) / MEL_BANDS as f64).cos()
    });
    let mfcc = dct.dot(&mel);
    Ok((
        mfcc.reversed_axes().as_standard_layout().to_owned(),
        cfg.hop_size as f64 / clip.sample_rate() as f64,
    ))
}

/// Mean of frame rows over each beat interval. The last beat's interval
/// extends one median beat period.
fn beat_means(frames: &Array2<f64>, hop: f64, beats: &BeatGrid) -> Array2<f64> {
    let t = beats.onsets();
    let dim = frames.ncols();
    let mut out = Array2::zeros((t.len(), dim));
    for (i, &start) in t.iter().enumerate() {
        let end = t.get(i + 1).copied().unwrap_or(start + beats.median_interval());
        let a = ((start / hop).round() as usize).min(frames.nrows().saturating_sub(1));
        let b = ((end / hop).round() as usize).clamp(a + 1, frames.nrows().max(a + 1));
        let b = b.min(frames.nrows());
        if a < b {
            let mean = frames.slice(ndarray::s![a..b, ..]).mean_axis(Axis(0)).unwrap();
            out.row_mut(i).assign(&mean);
        }
    }
    out
}

/// Rows `b .. b + block` stacked into one vector per starting beat `b`.
fn stack_blocks(per_beat: &Array2<f64>, block: usize) -> Array2<f64> {
    let (beats, dim) = per_beat.dim();
    let count = beats + 1 - block;
    let mut out = Array2::zeros((count, dim * block));
    for b in 0..count {
        for j in 0..block {
            out.slice_mut(ndarray::s![b, j * dim..(j + 1) * dim])
                .assign(&per_beat.row(b + j));
        }
    }
    out
}

fn l2_normalize_rows(x: &mut Array2<f64>) {
    for mut row in x.outer_iter_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row /= n;
        }
    }
}

fn z_normalize_columns(x: &mut Array2<f64>) {
    let mean: Array1<f64> = x.mean_axis(Axis(0)).unwrap();
    let sd = x.std_axis(Axis(0), 0.0);
    for mut row in x.outer_iter_mut() {
        for ((v, m), s) in row.iter_mut().zip(&mean).zip(&sd) {
            *v = if *s > 0.0 { (*v - m) / s } else { 0.0 };
        }
    }
}

/// Chroma and MFCC block features for `clip` at `beats`, in that order.
///
/// Chroma blocks are L2-normalized; MFCCs are z-normalized per coefficient
/// over the song before stacking.
pub fn beat_sync_features(clip: &AudioClip, beats: &BeatGrid, block: usize) -> Result<Vec<FeatureMatrix>> {
    if block == 0 {
        return Err(Error::InvalidConfig("block size must be at least 1 beat".into()));
    }
    if beats.len() < block {
        return Err(Error::InvalidConfig(format!(
            "{} beats is fewer than the block size {block}",
            beats.len()
        )));
    }
    let (chroma, chroma_hop) = frame_chroma(clip)?;
    let mut chroma_blocks = stack_blocks(&beat_means(&chroma, chroma_hop, beats), block);
    l2_normalize_rows(&mut chroma_blocks);

    let (mfcc, mfcc_hop) = frame_mfcc(clip)?;
    let mut per_beat = beat_means(&mfcc, mfcc_hop, beats);
    z_normalize_columns(&mut per_beat);
    let mfcc_blocks = stack_blocks(&per_beat, block);

    Ok(vec![
        FeatureMatrix {
            kind: FeatureKind::Chroma,
            values: chroma_blocks,
        },
        FeatureMatrix {
            kind: FeatureKind::Mfcc,
            values: mfcc_blocks,
        },
    ])
}

/// Per-beat chroma (rows = beats), before blocking. Exposed for inspection
/// and tests.
pub fn beat_chroma(clip: &AudioClip, beats: &BeatGrid) -> Result<Array2<f64>> {
    let (chroma, hop) = frame_chroma(clip)?;
    Ok(beat_means(&chroma, hop, beats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn a_bins_map_to_class_zero() {
        let cfg = chroma_cqt_config();
        let classes = pitch_classes(&cfg);
        let freqs = cfg.center_frequencies();
        let a110 = (0..freqs.len())
            .min_by(|&a, &b| (freqs[a] - 110.0).abs().total_cmp(&(freqs[b] - 110.0).abs()))
            .unwrap();
        assert_eq!(classes[a110], 0);
        assert_eq!(classes[a110 + 2], 1);
    }

    #[test]
    fn blocks_stack_consecutive_rows() {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let b = stack_blocks(&x, 3);
        assert_eq!(b, array![[1.0, 2.0, 3.0], [2.0, 3.0, 4.0]]);
    }

    #[test]
    fn mel_edges_round_trip() {
        for f in [20.0, 440.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
        }
    }
}

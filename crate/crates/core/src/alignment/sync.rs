//! Window selection on an alignment path and beat-wise time stretching of
//! the second song onto the first song's beat grid.

use ndarray::Array2;

use super::beats::{median, track_beats, BeatGrid};
use super::features::{beat_sync_features, DEFAULT_BLOCK_BEATS};
use super::fusion::{fuse_similarity, FusionConfig};
use super::smith_waterman::{smith_waterman, threshold_top, AlignmentPath, Scoring};
use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::spectral::time_stretch_map;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncConfig {
    pub block_beats: usize,
    pub fusion: FusionConfig,
    pub scoring: Scoring,
    /// Target duration of the extracted snippets in seconds.
    pub target_seconds: f64,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            block_beats: DEFAULT_BLOCK_BEATS,
            fusion: FusionConfig::default(),
            scoring: Scoring::default(),
            target_seconds: 20.0,
        }
    }
}

/// Synchronized snippets and where they came from.
#[derive(Debug, Clone)]
pub struct Snippets {
    pub a: AudioClip,
    /// The second song's snippet stretched onto the first song's beats.
    pub a_prime: AudioClip,
    /// Stretch factor of each consecutive pair of the selected path window.
    pub factors: Vec<f64>,
    /// Selected range of path pairs, inclusive.
    pub window: (usize, usize),
    /// Snippet bounds in the first song, seconds.
    pub start: f64,
    pub end: f64,
    /// Smith-Waterman score of the selected window.
    pub score: i64,
}

/// Everything produced while synchronizing two songs.
#[derive(Debug, Clone)]
pub struct Synchronization {
    pub beats_a: BeatGrid,
    pub beats_a_prime: BeatGrid,
    pub similarity: Array2<f64>,
    pub binary: Array2<bool>,
    pub scores: Array2<i64>,
    pub path: AlignmentPath,
    pub snippets: Snippets,
}

/// Smith-Waterman score of the path pairs `lo..=hi` taken on their own.
fn window_score(path: &AlignmentPath, lo: usize, hi: usize, b: &Array2<bool>, scoring: &Scoring) -> i64 {
    AlignmentPath {
        pairs: path.pairs[lo..=hi].to_vec(),
    }
    .score(b, scoring)
}

/// Chooses the contiguous path window whose duration in the first song is
/// closest to `target`. Windows within one median beat of the closest
/// duration compete on score per pair; ties go to the earliest.
pub fn select_window(
    path: &AlignmentPath,
    onsets_a: &[f64],
    b: &Array2<bool>,
    scoring: &Scoring,
    target: f64,
) -> Result<(usize, usize)> {
    if path.len() < 2 {
        return Err(Error::PathTooShort(path.len()));
    }
    let t: Vec<f64> = path.pairs.iter().map(|&(i, _)| onsets_a[i]).collect();
    let beat = median(&t.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>());
    // for each start, the end whose duration is closest to the target
    let candidates: Vec<(usize, usize, f64)> = (0..t.len() - 1)
        .map(|lo| {
            let hi = (lo + 1..t.len())
                .min_by(|&x, &y| {
                    let dx = (t[x] - t[lo] - target).abs();
                    let dy = (t[y] - t[lo] - target).abs();
                    dx.total_cmp(&dy)
                })
                .expect("non-empty range");
            (lo, hi, (t[hi] - t[lo] - target).abs())
        })
        .collect();
    let closest = candidates.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    let mut best: Option<(usize, usize, f64)> = None;
    for &(lo, hi, miss) in &candidates {
        if miss > closest + beat {
            continue;
        }
        let density = window_score(path, lo, hi, b, scoring) as f64 / (hi - lo + 1) as f64;
        if best.is_none_or(|(_, _, d)| density > d) {
            best = Some((lo, hi, density));
        }
    }
    let (lo, hi, _) = best.expect("at least one candidate");
    Ok((lo, hi))
}

/// Cuts the first song at the selected window's beats and stretches the
/// second song so that each aligned beat interval `[s_j, s_j']` fills the
/// matching interval `[t_i, t_i']` of the first.
pub fn extract_and_stretch(
    a: &AudioClip,
    a_prime: &AudioClip,
    path: &AlignmentPath,
    beats_a: &BeatGrid,
    beats_a_prime: &BeatGrid,
    b: &Array2<bool>,
    cfg: &SyncConfig,
) -> Result<Snippets> {
    let (lo, hi) = select_window(path, beats_a.onsets(), b, &cfg.scoring, cfg.target_seconds)?;
    let pairs = &path.pairs[lo..=hi];
    let t: Vec<f64> = pairs.iter().map(|&(i, _)| beats_a.onsets()[i]).collect();
    let s: Vec<f64> = pairs.iter().map(|&(_, j)| beats_a_prime.onsets()[j]).collect();
    let factors: Vec<f64> = t
        .windows(2)
        .zip(s.windows(2))
        .map(|(tw, sw)| (tw[1] - tw[0]) / (sw[1] - sw[0]))
        .collect();
    let sr = a.sample_rate() as f64;
    let snippet_a = a.slice_seconds(t[0], t[t.len() - 1]);
    let out_len = snippet_a.len();
    let snippet_a_prime = if factors.iter().all(|&f| f == 1.0) {
        let start = (s[0] * sr).round() as usize;
        let mut samples: Vec<f64> = a_prime.samples().iter().skip(start).take(out_len).copied().collect();
        samples.resize(out_len, 0.0);
        AudioClip::new(samples, a_prime.sample_rate())?
    } else {
        let anchors: Vec<(f64, f64)> = t.iter().zip(&s).map(|(&ti, &si)| ((ti - t[0]) * sr, si * sr)).collect();
        time_stretch_map(a_prime, &anchors, out_len)?
    };
    Ok(Snippets {
        a: snippet_a,
        a_prime: snippet_a_prime,
        factors,
        window: (lo, hi),
        start: t[0],
        end: t[t.len() - 1],
        score: window_score(path, lo, hi, b, &cfg.scoring),
    })
}

/// Full synchronization of a cover pair: beats, block features, fused
/// cross-similarity, top-k binarization, local alignment and beat-wise
/// stretching.
pub fn synchronize(a: &AudioClip, a_prime: &AudioClip, cfg: &SyncConfig) -> Result<Synchronization> {
    let beats_a = track_beats(a)?;
    let beats_a_prime = track_beats(a_prime)?;
    synchronize_with_beats(a, a_prime, beats_a, beats_a_prime, cfg)
}

/// [`synchronize`] with beat grids already tracked.
pub fn synchronize_with_beats(
    a: &AudioClip,
    a_prime: &AudioClip,
    beats_a: BeatGrid,
    beats_a_prime: BeatGrid,
    cfg: &SyncConfig,
) -> Result<Synchronization> {
    let fa = beat_sync_features(a, &beats_a, cfg.block_beats)?;
    let fb = beat_sync_features(a_prime, &beats_a_prime, cfg.block_beats)?;
    let similarity = fuse_similarity(&fa, &fb, &cfg.fusion)?;
    let binary = threshold_top(&similarity);
    let (scores, path) = smith_waterman(&binary, &cfg.scoring);
    let snippets = extract_and_stretch(a, a_prime, &path, &beats_a, &beats_a_prime, &binary, cfg)?;
    Ok(Synchronization {
        beats_a,
        beats_a_prime,
        similarity,
        binary,
        scores,
        path,
        snippets,
    })
}

//! Onset envelope and dynamic-programming beat tracking.

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::spectral::{stft, StftConfig};

/// Minimum clip length accepted by [`track_beats`], in seconds.
pub const MIN_SECONDS: f64 = 5.0;
pub const MIN_BPM: f64 = 40.0;
pub const MAX_BPM: f64 = 240.0;

const ONSET_WINDOW: usize = 1024;
const ONSET_HOP: usize = 128;
/// Center of the log-Gaussian tempo prior.
const PRIOR_BPM: f64 = 120.0;
/// Width of the tempo prior in octaves.
const PRIOR_OCTAVES: f64 = 1.0;
/// Weight of the squared log-deviation from the global beat period.
const TIGHTNESS: f64 = 100.0;

/// Beat onsets in seconds with the tempo implied by their median spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatGrid {
    onsets: Vec<f64>,
    tempo_bpm: f64,
}

impl BeatGrid {
    /// Needs at least two strictly increasing, finite onsets.
    pub fn new(onsets: Vec<f64>) -> Result<Self> {
        if onsets.len() < 2 {
            return Err(Error::NoBeats);
        }
        if onsets.iter().any(|t| !t.is_finite()) || onsets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(
                "beat onsets must be finite and strictly increasing".into(),
            ));
        }
        let tempo_bpm = 60.0 / median(&intervals(&onsets));
        Ok(Self { onsets, tempo_bpm })
    }

    pub fn onsets(&self) -> &[f64] {
        &self.onsets
    }

    pub fn tempo_bpm(&self) -> f64 {
        self.tempo_bpm
    }

    pub fn len(&self) -> usize {
        self.onsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.onsets.is_empty()
    }

    pub fn median_interval(&self) -> f64 {
        60.0 / self.tempo_bpm
    }
}

fn intervals(t: &[f64]) -> Vec<f64> {
    t.windows(2).map(|w| w[1] - w[0]).collect()
}

pub(crate) fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Half-wave rectified log-magnitude spectral flux, one value per STFT hop,
/// with the frames-per-second rate.
pub fn onset_envelope(clip: &AudioClip) -> Result<(Vec<f64>, f64)> {
    let cfg = StftConfig::new(ONSET_WINDOW, ONSET_HOP)?;
    let spec = stft(clip, &cfg)?;
    let logmag = spec.values.mapv(|c| (1.0 + 1000.0 * c.norm()).ln());
    let frames = logmag.ncols();
    let mut env = vec![0.0; frames];
    for t in 1..frames {
        env[t] = logmag
            .column(t)
            .iter()
            .zip(logmag.column(t - 1).iter())
            .map(|(a, b)| (a - b).max(0.0))
            .sum();
    }
    Ok((env, clip.sample_rate() as f64 / ONSET_HOP as f64))
}

/// Global beat period in frames from the envelope's autocorrelation,
/// weighted by a log-Gaussian tempo prior.
fn estimate_period(env: &[f64], fps: f64) -> f64 {
    let min_lag = (60.0 * fps / MAX_BPM).floor() as usize;
    let max_lag = ((60.0 * fps / MIN_BPM).ceil() as usize).min(env.len() - 1);
    let score = |lag: usize| -> f64 {
        let ac: f64 = env[lag..].iter().zip(env).map(|(a, b)| a * b).sum::<f64>() / (env.len() - lag) as f64;
        let bpm = 60.0 * fps / lag as f64;
        let w = (-0.5 * ((bpm / PRIOR_BPM).log2() / PRIOR_OCTAVES).powi(2)).exp();
        ac * w
    };
    let scores: Vec<f64> = (min_lag..=max_lag).map(score).collect();
    let best = scores
        .iter()
        .enumerate()
        .fold(0, |b, (i, &s)| if s > scores[b] { i } else { b });
    let lag = (min_lag + best) as f64;
    // parabolic refinement of the autocorrelation peak
    if best > 0 && best + 1 < scores.len() {
        let (a, b, c) = (scores[best - 1], scores[best], scores[best + 1]);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            return lag + 0.5 * (a - c) / denom;
        }
    }
    lag
}

/// Dynamic-programming beat tracker over the spectral-flux onset envelope.
pub fn track_beats(clip: &AudioClip) -> Result<BeatGrid> {
    let needed = (MIN_SECONDS * clip.sample_rate() as f64).ceil() as usize;
    if clip.len() < needed {
        return Err(Error::ShortInput {
            needed,
            got: clip.len(),
        });
    }
    let (raw, fps) = onset_envelope(clip)?;
    let sd = std_dev(&raw);
    if sd.is_nan() || sd <= 0.0 {
        return Err(Error::NoBeats);
    }
    let env: Vec<f64> = raw.iter().map(|v| v / sd).collect();
    let period = estimate_period(&env, fps);

    let lo = (0.5 * period).max(60.0 * fps / MAX_BPM).round().max(1.0) as usize;
    let hi = (2.0 * period).min(60.0 * fps / MIN_BPM).round() as usize;
    let n = env.len();
    let mut score = vec![0.0; n];
    let mut back = vec![usize::MAX; n];
    for t in 0..n {
        let mut best = 0.0;
        for prev in t.saturating_sub(hi)..t.saturating_sub(lo - 1).min(t) {
            let gap = (t - prev) as f64;
            let s = score[prev] - TIGHTNESS * (gap / period).ln().powi(2);
            if back[t] == usize::MAX || s > best {
                best = s;
                back[t] = prev;
            }
        }
        if back[t] != usize::MAX && best <= 0.0 {
            // starting a new chain here is at least as good
            back[t] = usize::MAX;
            best = 0.0;
        }
        score[t] = env[t] + best;
    }
    // end on the best-scoring frame within the last beat period
    let tail = n.saturating_sub(period.ceil() as usize);
    let mut end = tail;
    for t in tail..n {
        if score[t] > score[end] {
            end = t;
        }
    }
    let mut frames = vec![end];
    while back[*frames.last().unwrap()] != usize::MAX {
        frames.push(back[*frames.last().unwrap()]);
    }
    frames.reverse();
    let onsets: Vec<f64> = frames.iter().map(|&f| refine_peak(&env, f) / fps).collect();
    BeatGrid::new(onsets)
}

/// Sub-frame peak position by parabolic interpolation.
fn refine_peak(env: &[f64], f: usize) -> f64 {
    if f == 0 || f + 1 >= env.len() {
        return f as f64;
    }
    let (a, b, c) = (env[f - 1], env[f], env[f + 1]);
    let denom = a - 2.0 * b + c;
    if b >= a && b >= c && denom < 0.0 {
        f as f64 + 0.5 * (a - c) / denom
    } else {
        f as f64
    }
}

fn std_dev(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

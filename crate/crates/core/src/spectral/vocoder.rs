//! Phase vocoder time stretching and pitch shifting with identity phase
//! locking.

use std::f64::consts::PI;

use realfft::RealFftPlanner;
use rustfft::num_complex::Complex64;

use super::resample::resample;
use super::window::Window;
use crate::audio::AudioClip;
use crate::error::{Error, Result};

const WINDOW: usize = 2048;
const SYNTH_HOP: usize = 512;

pub const MIN_STRETCH: f64 = 0.25;
pub const MAX_STRETCH: f64 = 4.0;
pub const MAX_HALFSTEPS: i32 = 12;

fn princarg(x: f64) -> f64 {
    x - 2.0 * PI * ((x + PI) / (2.0 * PI)).floor()
}

fn check_factor(factor: f64) -> Result<()> {
    if !(MIN_STRETCH..=MAX_STRETCH).contains(&factor) {
        return Err(Error::OutOfRange(format!(
            "stretch factor {factor} outside [{MIN_STRETCH}, {MAX_STRETCH}]"
        )));
    }
    Ok(())
}

/// Stretches `clip` in time by `factor` (2.0 doubles the duration) without
/// changing pitch.
pub fn time_stretch(clip: &AudioClip, factor: f64) -> Result<AudioClip> {
    check_factor(factor)?;
    let out_len = (clip.len() as f64 * factor).round() as usize;
    Ok(stretch_with_map(
        clip,
        &[(0.0, 0.0), (out_len as f64, clip.len() as f64)],
        out_len,
    ))
}

/// Time stretch following a piecewise-linear map from output sample
/// positions to input sample positions. `anchors` are `(output, input)`
/// pairs with strictly increasing output positions; every segment's stretch
/// must lie in the allowed range.
pub fn time_stretch_map(clip: &AudioClip, anchors: &[(f64, f64)], out_len: usize) -> Result<AudioClip> {
    if anchors.len() < 2 {
        return Err(Error::InvalidConfig("time map needs at least two anchors".into()));
    }
    for w in anchors.windows(2) {
        let (du, dp) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
        if du <= 0.0 || dp <= 0.0 {
            return Err(Error::InvalidConfig("time map must be strictly increasing".into()));
        }
        check_factor(du / dp)?;
    }
    Ok(stretch_with_map(clip, anchors, out_len))
}

/// Shifts pitch by `halfsteps` semitones, keeping the duration.
pub fn pitch_shift(clip: &AudioClip, halfsteps: i32) -> Result<AudioClip> {
    if halfsteps.abs() > MAX_HALFSTEPS {
        return Err(Error::OutOfRange(format!(
            "pitch shift of {halfsteps} halfsteps exceeds ±{MAX_HALFSTEPS}"
        )));
    }
    let ratio = 2f64.powf(halfsteps as f64 / 12.0);
    let stretched = time_stretch(clip, ratio)?;
    let out = resample(stretched.samples(), 1.0 / ratio, clip.len());
    Ok(AudioClip::from_parts(out, clip.sample_rate()))
}

fn map_position(anchors: &[(f64, f64)], u: f64) -> f64 {
    let seg = match anchors.iter().position(|a| a.0 > u) {
        Some(0) => 0,
        Some(i) => i - 1,
        None => anchors.len() - 2,
    };
    let (a, b) = (anchors[seg], anchors[seg + 1]);
    a.1 + (u - a.0) * (b.1 - a.1) / (b.0 - a.0)
}

fn stretch_with_map(clip: &AudioClip, anchors: &[(f64, f64)], out_len: usize) -> AudioClip {
    let x = clip.samples();
    let half = WINDOW / 2;
    let bins = half + 1;
    let win = Window::Hann.coefficients(WINDOW);
    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(WINDOW);
    let ifft = planner.plan_fft_inverse(WINDOW);
    let mut frame_in = fft.make_input_vec();
    let mut scratch = fft.make_scratch_vec();

    let mut analyze = |center: isize, out: &mut Vec<Complex64>| {
        for (n, slot) in frame_in.iter_mut().enumerate() {
            let idx = center - half as isize + n as isize;
            let v = if idx >= 0 && (idx as usize) < x.len() {
                x[idx as usize]
            } else {
                0.0
            };
            *slot = v * win[n];
        }
        fft.process_with_scratch(&mut frame_in, out, &mut scratch)
            .expect("fft buffer sizes");
    };

    let frames = (out_len + half).div_ceil(SYNTH_HOP) + 1;
    let mut out = vec![0.0; frames * SYNTH_HOP + WINDOW];
    let mut norm = vec![0.0; out.len()];
    let mut cur = fft.make_output_vec();
    let mut reference = fft.make_output_vec();
    let mut synth = ifft.make_input_vec();
    let mut frame_out = ifft.make_output_vec();
    let mut iscratch = ifft.make_scratch_vec();
    let mut phase = vec![0.0; bins];
    let mut mag = vec![0.0; bins];
    let mut peak_of = vec![0usize; bins];
    let bin_advance: Vec<f64> = (0..bins)
        .map(|k| 2.0 * PI * k as f64 * SYNTH_HOP as f64 / WINDOW as f64)
        .collect();

    for m in 0..frames {
        let u = (m * SYNTH_HOP) as f64;
        let p = map_position(anchors, u).round() as isize;
        analyze(p, &mut cur);
        for k in 0..bins {
            mag[k] = cur[k].norm();
        }
        if m == 0 {
            for k in 0..bins {
                phase[k] = cur[k].arg();
            }
        } else {
            analyze(p - SYNTH_HOP as isize, &mut reference);
            let peaks: Vec<usize> = (0..bins)
                .filter(|&k| {
                    mag[k] > 0.0
                        && (k.saturating_sub(2)..=(k + 2).min(bins - 1))
                            .all(|j| j == k || mag[j] < mag[k] || (mag[j] == mag[k] && j > k))
                })
                .collect();
            if peaks.is_empty() {
                for k in 0..bins {
                    phase[k] = cur[k].arg();
                }
            } else {
                // each bin follows the nearest peak, split at the magnitude
                // minimum between neighboring peaks
                let mut start = 0;
                for (i, &pk) in peaks.iter().enumerate() {
                    let end = match peaks.get(i + 1) {
                        Some(&next) => {
                            (pk..=next)
                                .min_by(|&a, &b| mag[a].partial_cmp(&mag[b]).unwrap())
                                .unwrap()
                                + 1
                        }
                        None => bins,
                    };
                    for slot in &mut peak_of[start..end.min(bins)] {
                        *slot = pk;
                    }
                    start = end.min(bins);
                }
                let mut locked = vec![0.0; bins];
                for &pk in &peaks {
                    let dev = princarg(cur[pk].arg() - reference[pk].arg() - bin_advance[pk]);
                    locked[pk] = phase[pk] + bin_advance[pk] + dev;
                }
                for k in 0..bins {
                    let pk = peak_of[k];
                    phase[k] = locked[pk] + cur[k].arg() - cur[pk].arg();
                }
            }
        }
        for k in 0..bins {
            synth[k] = Complex64::from_polar(mag[k], phase[k]);
        }
        synth[0].im = 0.0;
        synth[bins - 1].im = 0.0;
        ifft.process_with_scratch(&mut synth, &mut frame_out, &mut iscratch)
            .expect("fft buffer sizes");
        // frame m is centered on output sample m * hop; the buffer is offset
        // by half a window
        let start = m * SYNTH_HOP;
        for n in 0..WINDOW {
            out[start + n] += frame_out[n] / WINDOW as f64 * win[n];
            norm[start + n] += win[n] * win[n];
        }
    }
    let samples = (0..out_len)
        .map(|i| {
            let z = norm[half + i];
            if z > 1e-10 {
                out[half + i] / z
            } else {
                0.0
            }
        })
        .collect();
    AudioClip::from_parts(samples, clip.sample_rate())
}

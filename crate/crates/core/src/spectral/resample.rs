//! Band-limited resampling with a Blackman-windowed sinc kernel.

use std::f64::consts::PI;

/// Zero crossings of the sinc kernel on each side at full bandwidth.
const ZERO_CROSSINGS: f64 = 16.0;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn blackman(u: f64) -> f64 {
    // u in [-1, 1]
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let a = PI * (u + 1.0);
    0.42 - 0.5 * a.cos() + 0.08 * (2.0 * a).cos()
}

/// Resamples `input` by `ratio` (output rate / input rate), producing exactly
/// `out_len` samples. Output sample `i` is taken at input position `i / ratio`.
pub fn resample(input: &[f64], ratio: f64, out_len: usize) -> Vec<f64> {
    assert!(ratio > 0.0 && ratio.is_finite());
    if input.is_empty() {
        return vec![0.0; out_len];
    }
    let cutoff = ratio.min(1.0);
    let half_width = ZERO_CROSSINGS / cutoff;
    let n = input.len() as isize;
    (0..out_len)
        .map(|i| {
            let t = i as f64 / ratio;
            let lo = (t - half_width).ceil() as isize;
            let hi = (t + half_width).floor() as isize;
            let mut acc = 0.0;
            for j in lo.max(0)..=hi.min(n - 1) {
                let d = t - j as f64;
                acc += input[j as usize] * cutoff * sinc(cutoff * d) * blackman(d / half_width);
            }
            acc
        })
        .collect()
}

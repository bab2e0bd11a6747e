//! Tempo bookkeeping around the style transfer. `B` is slowed or sped up to
//! the tempo of `A` before separation. The result is then brought back to
//! `B`'s tempo, scaled further by how much faster the cover `A'` is than `A`.

use crate::alignment::beats::{MAX_BPM, MIN_BPM};
use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::spectral::time_stretch;

fn check_tempo(name: &str, bpm: f64) -> Result<()> {
    if !(MIN_BPM..=MAX_BPM).contains(&bpm) {
        return Err(Error::OutOfRange(format!(
            "tempo {name} = {bpm} bpm outside [{MIN_BPM}, {MAX_BPM}]"
        )));
    }
    Ok(())
}

/// Tempo multiplier applied to `B'`, whose incoming tempo is `t_a`:
/// `(t_b / t_a) * (t_a_prime / t_a)`.
pub fn output_tempo_factor(t_a: f64, t_a_prime: f64, t_b: f64) -> f64 {
    (t_b / t_a) * (t_a_prime / t_a)
}

/// Stretches `B` so that its tempo becomes `t_a`. The duration scales by
/// `t_b / t_a`.
pub fn pre_scale_b(b: &AudioClip, t_a: f64, t_b: f64) -> Result<AudioClip> {
    check_tempo("t_A", t_a)?;
    check_tempo("t_B", t_b)?;
    let factor = t_b / t_a;
    if factor == 1.0 {
        return Ok(b.clone());
    }
    time_stretch(b, factor)
}

/// Scales the tempo of `B'` by [`output_tempo_factor`].
pub fn post_scale_b_prime(b_prime: &AudioClip, t_a: f64, t_a_prime: f64, t_b: f64) -> Result<AudioClip> {
    check_tempo("t_A", t_a)?;
    check_tempo("t_A'", t_a_prime)?;
    check_tempo("t_B", t_b)?;
    let factor = output_tempo_factor(t_a, t_a_prime, t_b);
    if factor == 1.0 {
        return Ok(b_prime.clone());
    }
    time_stretch(b_prime, 1.0 / factor)
}

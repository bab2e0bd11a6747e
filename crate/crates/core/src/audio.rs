//! Mono sample buffers and WAV file I/O.

use std::io::{Cursor, Read, Seek};
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::resample;

/// Sample rate used throughout the pipeline.
pub const SAMPLE_RATE: u32 = 22050;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::Format(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    /// Builds a clip from samples already known to be finite.
    pub(crate) fn from_parts(samples: Vec<f64>, sample_rate: u32) -> Self {
        debug_assert!(samples.iter().all(|x| x.is_finite()));
        Self { samples, sample_rate }
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self::from_parts(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Copy of the samples in `[start, end)` seconds, clamped to the clip.
    pub fn slice_seconds(&self, start: f64, end: f64) -> AudioClip {
        let sr = self.sample_rate as f64;
        let a = ((start * sr).round().max(0.0) as usize).min(self.len());
        let b = ((end * sr).round().max(0.0) as usize).clamp(a, self.len());
        Self::from_parts(self.samples[a..b].to_vec(), self.sample_rate)
    }

    /// Resamples to `rate` with a windowed-sinc interpolator.
    pub fn resampled(&self, rate: u32) -> AudioClip {
        if rate == self.sample_rate {
            return self.clone();
        }
        let ratio = rate as f64 / self.sample_rate as f64;
        let out_len = (self.len() as f64 * ratio).round() as usize;
        Self::from_parts(resample::resample(&self.samples, ratio, out_len), rate)
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Reads a mono 16-bit PCM or 32-bit float WAV file, resampling to
/// [`SAMPLE_RATE`] when needed.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let clip = decode_wav_reader(file)?;
    Ok(clip.resampled(SAMPLE_RATE))
}

/// Decodes WAV bytes without resampling.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    decode_wav_reader(Cursor::new(bytes))
}

fn decode_wav_reader<R: Read + Seek>(reader: R) -> Result<AudioClip> {
    let mut wav = hound::WavReader::new(reader)?;
    let spec = wav.spec();
    if spec.channels != 1 {
        return Err(Error::Format(format!(
            "expected mono audio, got {} channels",
            spec.channels
        )));
    }
    if spec.sample_rate == 0 {
        return Err(Error::Format("zero sample rate".into()));
    }
    // The header's length is untrusted, so grow the buffer as samples arrive.
    let mut samples = Vec::new();
    match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => {
            for s in wav.samples::<i16>() {
                samples.push(s? as f64 / 32768.0);
            }
        }
        (hound::SampleFormat::Float, 32) => {
            for s in wav.samples::<f32>() {
                let v = s? as f64;
                if !v.is_finite() {
                    return Err(Error::Format("non-finite float sample".into()));
                }
                samples.push(v);
            }
        }
        (fmt, bits) => {
            return Err(Error::Format(format!(
                "unsupported sample format {fmt:?} with {bits} bits"
            )))
        }
    }
    Ok(AudioClip::from_parts(samples, spec.sample_rate))
}

/// Writes a mono 32-bit float WAV.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in clip.samples() {
        w.write_sample(s as f32)?;
    }
    w.finalize()?;
    Ok(())
}

/// Writes a mono 16-bit PCM WAV, clipping to [-1, 1].
pub fn write_wav_pcm16(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in clip.samples() {
        w.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)?;
    }
    w.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(AudioClip::new(vec![0.0, f64::NAN], 22050).is_err());
        assert!(AudioClip::new(vec![0.0], 0).is_err());
    }

    #[test]
    fn float_wav_round_trip_is_exact_for_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let samples: Vec<f64> = (0..500).map(|i| ((i as f32) * 0.01).sin() as f64).collect();
        let clip = AudioClip::new(samples.clone(), SAMPLE_RATE).unwrap();
        write_wav(&path, &clip).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.samples(), &samples[..]);
    }

    #[test]
    fn pcm16_input_is_resampled_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let clip = AudioClip::new(vec![0.25; 44100], 44100).unwrap();
        write_wav_pcm16(&path, &clip).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate(), SAMPLE_RATE);
        assert_eq!(back.len(), 22050);
        assert!((back.samples()[11025] - 0.25).abs() < 1e-3);
    }

    #[test]
    fn stereo_is_rejected() {
        let mut buf = Cursor::new(Vec::new());
        {
            let spec = hound::WavSpec {
                channels: 2,
                sample_rate: 22050,
                bits_per_sample: 16,
                sample_format: hound::SampleFormat::Int,
            };
            let mut w = hound::WavWriter::new(&mut buf, spec).unwrap();
            w.write_sample(0i16).unwrap();
            w.write_sample(0i16).unwrap();
            w.finalize().unwrap();
        }
        assert!(matches!(decode_wav(buf.get_ref()), Err(Error::Format(_))));
    }

    #[test]
    fn garbage_bytes_are_an_error() {
        assert!(decode_wav(b"RIFF\x00\x00").is_err());
        assert!(decode_wav(&[]).is_err());
    }
}

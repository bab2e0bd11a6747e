use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::SAMPLE_RATE;
use crate::error::{Error, Result};
use crate::musaicing::MusaicConfig;
use crate::nmf2d::Nmf2dConfig;
use crate::spectral::griffin_lim::DEFAULT_ITERATIONS;
use crate::spectral::{CqtConfig, StftConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub song_a: PathBuf,
    pub song_a_prime: PathBuf,
    pub song_b: PathBuf,
    pub output: PathBuf,
    pub nmf: Nmf2dConfig,
    pub musaic: MusaicConfig,
    pub stft: StftConfig,
    pub cqt: CqtConfig,
    /// Target length of the synchronized snippets.
    pub snippet_seconds: f64,
    /// Fit `W1` to `A` alone before the joint factorization.
    pub pretrain_w1: bool,
    /// Directory receiving every intermediate tensor, track and log.
    pub save_intermediates: Option<PathBuf>,
    /// Replace musaicing by phase retrieval on `|W2 * H2|`.
    pub blurry_baseline: bool,
    pub griffin_lim_iterations: usize,
    /// Start of the `B` snippet in seconds after tempo scaling; `None`
    /// picks the window with the most onset energy.
    pub b_offset_seconds: Option<f64>,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(
        song_a: impl Into<PathBuf>,
        song_a_prime: impl Into<PathBuf>,
        song_b: impl Into<PathBuf>,
        output: impl Into<PathBuf>,
    ) -> Self {
        Self {
            song_a: song_a.into(),
            song_a_prime: song_a_prime.into(),
            song_b: song_b.into(),
            output: output.into(),
            nmf: Nmf2dConfig::default(),
            musaic: MusaicConfig::default(),
            stft: StftConfig::default(),
            cqt: CqtConfig::default(),
            snippet_seconds: 20.0,
            pretrain_w1: false,
            save_intermediates: None,
            blurry_baseline: false,
            griffin_lim_iterations: DEFAULT_ITERATIONS,
            b_offset_seconds: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.nmf.validate()?;
        self.musaic.validate()?;
        self.stft.validate()?;
        self.cqt.validate(SAMPLE_RATE)?;
        if !(self.snippet_seconds > 0.0 && self.snippet_seconds.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "snippet length must be positive, got {} s",
                self.snippet_seconds
            )));
        }
        if self.griffin_lim_iterations == 0 {
            return Err(Error::InvalidConfig("griffin-lim needs at least one iteration".into()));
        }
        if let Some(t) = self.b_offset_seconds {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::InvalidConfig(format!("B offset must be nonnegative, got {t} s")));
            }
        }
        Ok(())
    }

    /// Where the manifest of a run is written: next to the output, with the
    /// extension `manifest.json`.
    pub fn manifest_path(&self) -> PathBuf {
        sibling(&self.output, "manifest.json")
    }

    /// Where the wall-clock stage timings are written.
    pub fn timings_path(&self) -> PathBuf {
        sibling(&self.output, "timings.json")
    }
}

fn sibling(output: &Path, ext: &str) -> PathBuf {
    output.with_extension(ext)
}

/// Reproducible summary of a run. Wall-clock timings are kept out of it so
/// that identical runs give identical manifests; see [`StageTiming`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tempo_a: f64,
    pub tempo_a_prime: f64,
    pub tempo_b: f64,
    /// `(tempo_b / tempo_a) * (tempo_a_prime / tempo_a)`.
    pub tempo_factor: f64,
    pub final_tempo: f64,
    pub alignment_score: i64,
    pub alignment_pairs: usize,
    pub snippet_start_seconds: f64,
    pub snippet_end_seconds: f64,
    pub b_offset_seconds: f64,
    pub components: usize,
    pub joint_objective: f64,
    pub pretrain_objective: Option<f64>,
    pub fit_objective: f64,
    /// Final musaicing divergence per track; empty for the baseline.
    pub musaic_divergence: Vec<f64>,
    pub blurry_baseline: bool,
    pub output_seconds: f64,
    pub seed: u64,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("manifest: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

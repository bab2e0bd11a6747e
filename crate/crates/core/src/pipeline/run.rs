use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use ndarray::{Array2, Array3, Axis};
use rayon::prelude::*;

use super::config::{PipelineConfig, RunManifest, StageTiming};
use super::tempo::{output_tempo_factor, post_scale_b_prime, pre_scale_b};
use super::tensor_io::dump_array;
use crate::alignment::{onset_envelope, synchronize_with_beats, track_beats, SyncConfig, Synchronization};
use crate::audio::{read_wav, write_wav, AudioClip};
use crate::error::{Error, Result};
use crate::musaicing::{build_dictionary, divergence_log, mix_tracks, musaic_track};
use crate::nmf2d::{
    convergence_log, fit_activations, joint_factorize, joint_factorize_pretrained, reconstruct, soft_mask_filter,
    soft_masks, ActivationFit, ActivationTensor, JointFactorization, Nmf2dConfig, TemplateTensor,
};
use crate::spectral::spectrogram::upsample_linear;
use crate::spectral::{griffin_lim, icqt, stft, ComplexSpectrogram, CqtConfig, CqtPlan, Layout, MagnitudeSpectrogram};

/// Result of [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub b_prime: AudioClip,
    pub manifest: RunManifest,
    pub timings: Vec<StageTiming>,
}

/// Files written so far, removed again if the run fails.
#[derive(Default)]
struct Artifacts {
    dir: Option<PathBuf>,
    written: Mutex<Vec<PathBuf>>,
}

impl Artifacts {
    fn record(&self, path: PathBuf) -> PathBuf {
        self.written.lock().expect("artifact list").push(path.clone());
        path
    }

    fn intermediate(&self, name: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(name))
    }

    fn tensor<S, D>(&self, name: &str, a: &ndarray::ArrayBase<S, D>) -> Result<()>
    where
        S: ndarray::Data<Elem = f64>,
        D: ndarray::Dimension,
    {
        if let Some(p) = self.intermediate(name) {
            dump_array(self.record(p), a)?;
        }
        Ok(())
    }

    fn wav(&self, name: &str, clip: &AudioClip) -> Result<()> {
        if let Some(p) = self.intermediate(name) {
            write_wav(self.record(p), clip)?;
        }
        Ok(())
    }

    fn text(&self, name: &str, text: &str) -> Result<()> {
        if let Some(p) = self.intermediate(name) {
            std::fs::write(self.record(p), text)?;
        }
        Ok(())
    }

    fn remove_all(&self) {
        for p in self.written.lock().expect("artifact list").iter().rev() {
            let _ = std::fs::remove_file(p);
        }
    }
}

/// Runs named stages, recording their wall-clock time and tagging their
/// errors with the stage name.
#[derive(Default)]
struct Stages {
    timings: Vec<StageTiming>,
}

impl Stages {
    fn run<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| e.in_stage(stage));
        let seconds = start.elapsed().as_secs_f64();
        log::info!("{stage}: {seconds:.2} s");
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds,
        });
        out
    }
}

/// Start sample of the `len`-sample window of `clip` with the most onset
/// energy; ties go to the earliest window.
pub fn loudest_window(clip: &AudioClip, len: usize) -> Result<usize> {
    if clip.len() <= len {
        return Ok(0);
    }
    let (env, fps) = onset_envelope(clip)?;
    let hop = clip.sample_rate() as f64 / fps;
    let width = ((len as f64 / hop).round() as usize).clamp(1, env.len());
    let mut sum: f64 = env[..width].iter().sum();
    let (mut best, mut best_sum) = (0, sum);
    for f in 1..=env.len() - width {
        sum += env[f + width - 1] - env[f - 1];
        if sum > best_sum {
            best = f;
            best_sum = sum;
        }
    }
    Ok(((best as f64 * hop).round() as usize).min(clip.len() - len))
}

/// Joint factorization of two equally long clips' CQT magnitudes, and
/// optionally the activations of a third clip against the first clip's
/// templates.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub joint: JointFactorization,
    pub fit: Option<ActivationFit>,
}

pub fn factorize_clips(
    a: &ComplexSpectrogram,
    a_prime: &ComplexSpectrogram,
    b: Option<&ComplexSpectrogram>,
    cfg: &Nmf2dConfig,
    pretrain_w1: bool,
) -> Result<Factorization> {
    let x1 = a.coarse_magnitude();
    let x2 = a_prime.coarse_magnitude();
    let joint = if pretrain_w1 {
        joint_factorize_pretrained(x1.view(), x2.view(), cfg)?
    } else {
        joint_factorize(x1.view(), x2.view(), cfg)?
    };
    let fit = match b {
        Some(b) => Some(fit_activations(b.coarse_magnitude().view(), &joint.w1, cfg)?),
        None => None,
    };
    Ok(Factorization { joint, fit })
}

fn stack_masks(masks: Vec<Array2<f64>>) -> Array3<f64> {
    let views: Vec<_> = masks.iter().map(|m| m.view()).collect();
    ndarray::stack(Axis(0), &views).expect("masks share a shape")
}

/// Magnitude `|W * H|` spread onto the fine CQT grid of `like`, with the
/// residual bands silent.
fn coarse_to_fine(mag: &Array2<f64>, like: &ComplexSpectrogram) -> MagnitudeSpectrogram {
    MagnitudeSpectrogram {
        values: upsample_linear(mag, like.downsample(), like.frames()),
        residual: Array2::zeros(like.residual.raw_dim()),
        layout: like.layout.clone(),
        signal_len: like.signal_len,
        sample_rate: like.sample_rate,
    }
}

fn cqt_config(spec: &ComplexSpectrogram) -> CqtConfig {
    match &spec.layout {
        Layout::Cqt(l) => l.cfg,
        Layout::Stft(_) => unreachable!("pipeline spectrograms are CQTs"),
    }
}

/// Full style transfer: synchronize `A` and `A'`, learn paired templates,
/// split `B` and the snippets into tracks, rebuild each track of `B` from
/// grains of the matching track of `A'`, mix, and restore the tempo.
///
/// On failure every file the run wrote is removed again.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let mut artifacts = Artifacts::default();
    if let Some(dir) = &cfg.save_intermediates {
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).in_stage("save"))?;
        artifacts.dir = Some(dir.clone());
    }
    let out = run_stages(cfg, &artifacts);
    if out.is_err() {
        artifacts.remove_all();
    }
    out
}

fn run_stages(cfg: &PipelineConfig, artifacts: &Artifacts) -> Result<PipelineOutput> {
    let mut stages = Stages::default();
    let (a, a_prime, b) = stages.run("load", || {
        Ok((
            read_wav(&cfg.song_a)?,
            read_wav(&cfg.song_a_prime)?,
            read_wav(&cfg.song_b)?,
        ))
    })?;
    let (beats_a, beats_a_prime, beats_b) = stages.run("beats", || {
        Ok((track_beats(&a)?, track_beats(&a_prime)?, track_beats(&b)?))
    })?;
    let (t_a, t_a_prime, t_b) = (beats_a.tempo_bpm(), beats_a_prime.tempo_bpm(), beats_b.tempo_bpm());
    log::info!("tempos: A {t_a:.2}, A' {t_a_prime:.2}, B {t_b:.2} bpm");

    let sync_cfg = SyncConfig {
        target_seconds: cfg.snippet_seconds,
        ..SyncConfig::default()
    };
    let sync: Synchronization = stages.run("align", || {
        let sync = synchronize_with_beats(&a, &a_prime, beats_a, beats_a_prime, &sync_cfg)?;
        artifacts.text(
            "alignment_path.txt",
            &sync.path.to_text(sync.beats_a.onsets(), sync.beats_a_prime.onsets()),
        )?;
        artifacts.tensor("similarity.cstn", &sync.similarity)?;
        artifacts.wav("snippet_A.wav", &sync.snippets.a)?;
        artifacts.wav("snippet_A_prime.wav", &sync.snippets.a_prime)?;
        Ok(sync)
    })?;
    let snippets = &sync.snippets;

    let b_scaled = stages.run("pre-scale", || pre_scale_b(&b, t_a, t_b))?;
    let (b_snippet, b_offset) = stages.run("select B", || {
        let len = snippets.a.len();
        let start = match cfg.b_offset_seconds {
            Some(t) => ((t * b_scaled.sample_rate() as f64).round() as usize).min(b_scaled.len()),
            None => loudest_window(&b_scaled, len)?,
        };
        let end = (start + len).min(b_scaled.len());
        let clip = AudioClip::new(b_scaled.samples()[start..end].to_vec(), b_scaled.sample_rate())?;
        artifacts.wav("snippet_B.wav", &clip)?;
        Ok((clip, start as f64 / b_scaled.sample_rate() as f64))
    })?;

    let (c_a, c_a_prime, c_b) = stages.run("cqt", || {
        let plan = CqtPlan::new(&cfg.cqt, snippets.a.sample_rate(), snippets.a.len())?;
        let c_b = crate::spectral::cqt(&b_snippet, &cfg.cqt)?;
        Ok((plan.analyze(&snippets.a), plan.analyze(&snippets.a_prime), c_b))
    })?;

    let nmf_cfg = Nmf2dConfig {
        seed: cfg.seed,
        ..cfg.nmf
    };
    let joint = stages.run("factorize", || {
        let f = factorize_clips(&c_a, &c_a_prime, None, &nmf_cfg, cfg.pretrain_w1)?;
        let j = f.joint;
        artifacts.tensor("W1.cstn", &j.w1.0)?;
        artifacts.tensor("W2.cstn", &j.w2.0)?;
        artifacts.tensor("H1.cstn", &j.h1.0)?;
        artifacts.text("joint_objective.txt", &convergence_log(&j.objective))?;
        if !j.pretrain_objective.is_empty() {
            artifacts.text("pretrain_objective.txt", &convergence_log(&j.pretrain_objective))?;
        }
        Ok(j)
    })?;
    let fit = stages.run("fit", || {
        let fit = fit_activations(c_b.coarse_magnitude().view(), &joint.w1, &nmf_cfg)?;
        artifacts.tensor("H2.cstn", &fit.h.0)?;
        artifacts.text("fit_objective.txt", &convergence_log(&fit.objective))?;
        Ok(fit)
    })?;

    let p = nmf_cfg.mask_exponent;
    let (tracks_b, musaic_divergence) = if cfg.blurry_baseline {
        let clip = stages.run("baseline", || {
            blurry_baseline(&joint.w2, &fit, &c_b, cfg.griffin_lim_iterations)
        })?;
        (vec![clip], Vec::new())
    } else {
        let (tracks_a, tracks_a_prime, tracks_b) = stages.run("filter", || {
            let split = |c: &ComplexSpectrogram,
                         w: &TemplateTensor,
                         h: &ActivationTensor,
                         tag: &str|
             -> Result<Vec<AudioClip>> {
                artifacts.tensor(&format!("masks_{tag}.cstn"), &stack_masks(soft_masks(w, h, p)?))?;
                let parts = soft_mask_filter(c, w, h, p)?;
                let clips = parts
                    .iter()
                    .map(|s| icqt(s, &cqt_config(s)))
                    .collect::<Result<Vec<_>>>()?;
                for (k, clip) in clips.iter().enumerate() {
                    artifacts.wav(&format!("track_{tag}_{k}.wav"), clip)?;
                }
                Ok(clips)
            };
            Ok((
                split(&c_a, &joint.w1, &joint.h1, "A")?,
                split(&c_a_prime, &joint.w2, &joint.h1, "A_prime")?,
                split(&c_b, &joint.w1, &fit.h, "B")?,
            ))
        })?;
        let musaics = stages.run("musaic", || {
            (0..tracks_b.len())
                .into_par_iter()
                .map(|k| {
                    let dict_a = build_dictionary(&tracks_a[k], &cfg.stft)?;
                    let dict_a_prime = build_dictionary(&tracks_a_prime[k], &cfg.stft)?;
                    let target = stft(&tracks_b[k], &cfg.stft)?;
                    let seed = cfg.seed.wrapping_add(1 + k as u64);
                    let m = musaic_track(&dict_a, &dict_a_prime, &target, &cfg.musaic, seed)?;
                    log::info!(
                        "track {k}: divergence {:.4e} -> {:.4e}",
                        m.initial_divergence,
                        m.final_divergence
                    );
                    artifacts.tensor(&format!("musaic_H_{k}.cstn"), &m.activations)?;
                    artifacts.text(&format!("musaic_divergence_{k}.txt"), &divergence_log(&m))?;
                    Ok((m.spec, m.final_divergence))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let divergences = musaics.iter().map(|m| m.1).collect();
        let specs: Vec<_> = musaics.into_iter().map(|m| m.0).collect();
        let mix = stages.run("mix", || mix_tracks(&specs))?;
        (vec![mix], divergences)
    };
    let b_prime_at_a = tracks_b.into_iter().next().expect("one output");
    let b_prime = stages.run("post-scale", || post_scale_b_prime(&b_prime_at_a, t_a, t_a_prime, t_b))?;

    let factor = output_tempo_factor(t_a, t_a_prime, t_b);
    let manifest = RunManifest {
        tempo_a: t_a,
        tempo_a_prime: t_a_prime,
        tempo_b: t_b,
        tempo_factor: factor,
        final_tempo: t_a * factor,
        alignment_score: snippets.score,
        alignment_pairs: sync.path.len(),
        snippet_start_seconds: snippets.start,
        snippet_end_seconds: snippets.end,
        b_offset_seconds: b_offset,
        components: nmf_cfg.components,
        joint_objective: joint.objective.last().copied().unwrap_or(f64::NAN),
        pretrain_objective: joint.pretrain_objective.last().copied(),
        fit_objective: fit.objective.last().copied().unwrap_or(f64::NAN),
        musaic_divergence,
        blurry_baseline: cfg.blurry_baseline,
        output_seconds: b_prime.duration(),
        seed: cfg.seed,
    };
    stages.run("save", || {
        if let Some(parent) = cfg.output.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        write_wav(artifacts.record(cfg.output.clone()), &b_prime)?;
        std::fs::write(artifacts.record(cfg.manifest_path()), manifest.to_json())?;
        Ok(())
    })?;
    let timings = stages.timings;
    write_timings(&cfg.timings_path(), &timings).map_err(|e| e.in_stage("save"))?;
    Ok(PipelineOutput {
        b_prime,
        manifest,
        timings,
    })
}

fn write_timings(path: &Path, timings: &[StageTiming]) -> Result<()> {
    let text = serde_json::to_string_pretty(timings).expect("timings serialize");
    std::fs::write(path, text)?;
    Ok(())
}

/// Direct phase retrieval on `|W2 * H2|` in place of musaicing.
fn blurry_baseline(
    w2: &TemplateTensor,
    fit: &ActivationFit,
    c_b: &ComplexSpectrogram,
    iterations: usize,
) -> Result<AudioClip> {
    let mag = reconstruct(w2, &fit.h)?;
    griffin_lim(&coarse_to_fine(&mag, c_b), iterations)
}

/// Pads or truncates `a_prime` to the length of `a`, for callers that
/// factorize clips synchronized elsewhere.
pub fn match_length(a: &AudioClip, a_prime: &AudioClip) -> AudioClip {
    let mut s = a_prime.samples().to_vec();
    s.resize(a.len(), 0.0);
    AudioClip::new(s, a_prime.sample_rate()).expect("finite samples")
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coversynth::alignment::{synchronize, SyncConfig};
use coversynth::audio::{read_wav, write_wav};
use coversynth::musaicing::{build_dictionary, divergence_log, musaic_track, GrainDictionary, MusaicConfig, SHIFTS};
use coversynth::nmf2d::{convergence_log, Nmf2dConfig};
use coversynth::pipeline::{dump_array, factorize_clips, load_tensor, match_length, run_pipeline, PipelineConfig};
use coversynth::spectral::{cqt, istft, stft, ComplexSpectrogram, CqtConfig, Layout, StftConfig};
use coversynth::{Error, Result, SAMPLE_RATE};

#[derive(Parser)]
#[command(
    name = "coversynth",
    version,
    about = "Render a song in the style of a cover of another song"
)]
struct Cli {
    /// Worker threads for all parallel work; 1 gives bitwise-reproducible runs.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: B' is B rendered in the style that A' gives A.
    Run(RunArgs),
    /// Beat-level alignment of a cover pair: path and cross-similarity only.
    Align(AlignArgs),
    /// Joint template factorization of two synchronized clips.
    Factorize(FactorizeArgs),
    /// Rebuild a target from grains of a source, played with the paired source.
    Musaic(MusaicArgs),
}

#[derive(Args)]
struct NmfArgs {
    #[arg(long, default_value_t = 3)]
    components: usize,
    #[arg(long, default_value_t = 14)]
    freq_shifts: usize,
    #[arg(long, default_value_t = 20)]
    time_lags: usize,
    /// Factorization sweeps.
    #[arg(long, default_value_t = 300)]
    iters: usize,
    /// Fit the templates of A alone before the joint factorization.
    #[arg(long)]
    pretrain_w1: bool,
}

impl NmfArgs {
    fn config(&self, seed: u64) -> Nmf2dConfig {
        Nmf2dConfig {
            components: self.components,
            freq_shifts: self.freq_shifts,
            time_lags: self.time_lags,
            iterations: self.iters,
            seed,
            ..Nmf2dConfig::default()
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    song_a: PathBuf,
    #[arg(long)]
    song_a_prime: PathBuf,
    #[arg(long)]
    song_b: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    nmf: NmfArgs,
    /// Musaicing iterations.
    #[arg(long, default_value_t = 100)]
    musaic_iters: usize,
    #[arg(long, default_value_t = 20.0)]
    snippet_seconds: f64,
    /// Invert |W2 * H2| by phase retrieval instead of musaicing.
    #[arg(long)]
    blurry_baseline: bool,
    /// Start of the B snippet in seconds; default: the most onset-dense window.
    #[arg(long)]
    b_offset: Option<f64>,
    #[arg(long)]
    save_intermediates: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    song_a: PathBuf,
    #[arg(long)]
    song_a_prime: PathBuf,
    /// Receives alignment_path.txt and similarity.cstn.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct FactorizeArgs {
    #[arg(long)]
    song_a: PathBuf,
    /// Padded or cut to the length of A.
    #[arg(long)]
    song_a_prime: PathBuf,
    /// Also fit activations of this song against the templates of A.
    #[arg(long)]
    song_b: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    nmf: NmfArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct MusaicArgs {
    /// Source track: a WAV, or a complex grain dictionary tensor.
    #[arg(long)]
    source: PathBuf,
    /// Paired source track, same form as --source.
    #[arg(long)]
    source_prime: PathBuf,
    /// Target: a WAV, or a complex STFT tensor.
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    musaic_iters: usize,
    /// Also write the final activations and the divergence log here.
    #[arg(long)]
    save_activations: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn is_tensor(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "cstn")
}

fn load_dictionary(path: &Path, cfg: &StftConfig) -> Result<GrainDictionary> {
    if !is_tensor(path) {
        return build_dictionary(&read_wav(path)?, cfg);
    }
    let values = load_tensor(path)?.into_complex()?;
    let blocks = SHIFTS.count();
    if values.nrows() != cfg.bins() || values.ncols() % blocks != 0 || values.ncols() == 0 {
        return Err(Error::Format(format!(
            "grain dictionary must be {} bins by a positive multiple of {blocks} columns, got {:?}",
            cfg.bins(),
            values.dim()
        )));
    }
    let block_frames = values.ncols() / blocks;
    Ok(GrainDictionary {
        spec: ComplexSpectrogram {
            residual: ndarray::Array2::zeros((0, values.ncols())),
            values,
            layout: Layout::Stft(*cfg),
            signal_len: (block_frames - 1) * cfg.hop_size,
            sample_rate: SAMPLE_RATE,
        },
        block_frames,
    })
}

fn load_target(path: &Path, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    if !is_tensor(path) {
        return stft(&read_wav(path)?, cfg);
    }
    let values = load_tensor(path)?.into_complex()?;
    if values.nrows() != cfg.bins() || values.ncols() == 0 {
        return Err(Error::Format(format!(
            "target STFT must be {} bins by at least one frame, got {:?}",
            cfg.bins(),
            values.dim()
        )));
    }
    Ok(ComplexSpectrogram {
        residual: ndarray::Array2::zeros((0, values.ncols())),
        signal_len: (values.ncols() - 1) * cfg.hop_size,
        values,
        layout: Layout::Stft(*cfg),
        sample_rate: SAMPLE_RATE,
    })
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = PipelineConfig::new(args.song_a, args.song_a_prime, args.song_b, args.out);
    cfg.nmf = args.nmf.config(args.seed);
    cfg.musaic.iterations = args.musaic_iters;
    cfg.snippet_seconds = args.snippet_seconds;
    cfg.pretrain_w1 = args.nmf.pretrain_w1;
    cfg.blurry_baseline = args.blurry_baseline;
    cfg.b_offset_seconds = args.b_offset;
    cfg.save_intermediates = args.save_intermediates;
    cfg.seed = args.seed;
    let out = run_pipeline(&cfg)?;
    let m = &out.manifest;
    println!(
        "wrote {} ({:.2} s, tempo {:.1} bpm); manifest {}",
        cfg.output.display(),
        m.output_seconds,
        m.final_tempo,
        cfg.manifest_path().display()
    );
    Ok(())
}

fn align(args: AlignArgs) -> Result<()> {
    let a = read_wav(&args.song_a).map_err(|e| e.in_stage("load"))?;
    let a_prime = read_wav(&args.song_a_prime).map_err(|e| e.in_stage("load"))?;
    let sync = synchronize(&a, &a_prime, &SyncConfig::default()).map_err(|e| e.in_stage("align"))?;
    std::fs::create_dir_all(&args.out_dir)?;
    let text = sync.path.to_text(sync.beats_a.onsets(), sync.beats_a_prime.onsets());
    std::fs::write(args.out_dir.join("alignment_path.txt"), text)?;
    dump_array(args.out_dir.join("similarity.cstn"), &sync.similarity)?;
    println!("{} aligned beats, score {}", sync.path.len(), sync.snippets.score);
    Ok(())
}

fn factorize(args: FactorizeArgs) -> Result<()> {
    let cfg = args.nmf.config(args.seed);
    cfg.validate()?;
    let load = |p: &Path| read_wav(p).map_err(|e| e.in_stage("load"));
    let a = load(&args.song_a)?;
    let a_prime = match_length(&a, &load(&args.song_a_prime)?);
    let b = args.song_b.as_deref().map(load).transpose()?;
    let cqt_cfg = CqtConfig::default();
    let spec = |c| cqt(c, &cqt_cfg).map_err(|e| e.in_stage("cqt"));
    let (ca, cap) = (spec(&a)?, spec(&a_prime)?);
    let cb = b.as_ref().map(spec).transpose()?;
    let f = factorize_clips(&ca, &cap, cb.as_ref(), &cfg, args.nmf.pretrain_w1).map_err(|e| e.in_stage("factorize"))?;
    std::fs::create_dir_all(&args.out_dir)?;
    let dir = &args.out_dir;
    dump_array(dir.join("W1.cstn"), &f.joint.w1.0)?;
    dump_array(dir.join("W2.cstn"), &f.joint.w2.0)?;
    dump_array(dir.join("H1.cstn"), &f.joint.h1.0)?;
    std::fs::write(dir.join("joint_objective.txt"), convergence_log(&f.joint.objective))?;
    if let Some(fit) = &f.fit {
        dump_array(dir.join("H2.cstn"), &fit.h.0)?;
        std::fs::write(dir.join("fit_objective.txt"), convergence_log(&fit.objective))?;
    }
    println!(
        "final objective {:.6e} after {} sweeps",
        f.joint.objective.last().copied().unwrap_or(f64::NAN),
        f.joint.objective.len()
    );
    Ok(())
}

fn musaic(args: MusaicArgs) -> Result<()> {
    let cfg = MusaicConfig {
        iterations: args.musaic_iters,
        ..MusaicConfig::default()
    };
    cfg.validate()?;
    let stft_cfg = StftConfig::default();
    let dict = load_dictionary(&args.source, &stft_cfg).map_err(|e| e.in_stage("load"))?;
    let dict_prime = load_dictionary(&args.source_prime, &stft_cfg).map_err(|e| e.in_stage("load"))?;
    let target = load_target(&args.target, &stft_cfg).map_err(|e| e.in_stage("load"))?;
    let m = musaic_track(&dict, &dict_prime, &target, &cfg, args.seed).map_err(|e| e.in_stage("musaic"))?;
    let clip = istft(&m.spec, &stft_cfg)?;
    write_wav(&args.out, &clip)?;
    if let Some(path) = &args.save_activations {
        dump_array(path, &m.activations)?;
        std::fs::write(path.with_extension("txt"), divergence_log(&m))?;
    }
    println!(
        "divergence {:.6e} -> {:.6e}; wrote {}",
        m.initial_divergence,
        m.final_divergence,
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("global pool is configured once");
    }
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Align(a) => align(a),
        Command::Factorize(a) => factorize(a),
        Command::Musaic(a) => musaic(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}

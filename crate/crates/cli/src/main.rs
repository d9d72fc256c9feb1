//! `dfsnet`: simulate scenes, train, enhance, evaluate and inspect models.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use dfsnet_core::io::{
    load_scene_metadata, load_weights, read_wav_expect, save_scene_metadata, save_weights,
    write_wav, SceneMetadata, WavFormat, WeightFile,
};
use dfsnet_core::sim::{synthesize_scene, SceneSampler};
use dfsnet_core::{
    count_macs, count_params, delay_and_sum, enhance_offline, enhance_streaming, latency_report,
    make_target, apply_steering, si_sdr, train_loop, ModelConfig, ModelParams,
    MultichannelBuffer, TrainConfig, TrainingItem,
};

#[derive(Parser)]
#[command(name = "dfsnet", version, about = "Causal streaming neural beamformer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a random shoebox scene to mix/clean/noise wavs plus scene.json.
    Simulate(SimulateArgs),
    /// Steer and enhance a multichannel recording.
    Enhance(EnhanceArgs),
    /// Train a model on simulated scenes.
    Train(TrainArgs),
    /// SI-SDR of an estimate against the delay-and-sum target.
    Eval(EvalArgs),
    /// Parameter count, compute rate and latency of a configuration.
    Info(InfoArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Microphone count (2..=6 drawn at random when omitted).
    #[arg(long)]
    mics: Option<usize>,
    #[arg(long)]
    t60: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    snr: Option<f64>,
    /// Signal length in seconds.
    #[arg(long, default_value_t = 4.0)]
    duration: f64,
    /// Largest simulated direction error, in degrees.
    #[arg(long, default_value_t = 5.0)]
    max_angle: f64,
    #[arg(long, default_value_t = 17)]
    taps: usize,
}

#[derive(Args)]
struct EnhanceArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Process hop by hop (default).
    #[arg(long, conflicts_with = "batch")]
    streaming: bool,
    /// Process the whole file at once.
    #[arg(long)]
    batch: bool,
    /// Steer with the true instead of the perturbed TDOAs.
    #[arg(long)]
    exact_tdoa: bool,
    #[arg(long, value_enum, default_value = "float32")]
    format: Format,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Format {
    Pcm16,
    Float32,
}

impl From<Format> for WavFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Pcm16 => WavFormat::Pcm16,
            Format::Float32 => WavFormat::Float32,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// `tiny`, `reference`, or a JSON model configuration.
    #[arg(long, default_value = "tiny")]
    config: String,
    /// A scene directory, or a directory of scene directories.
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Metrics log; defaults to the weights path with a `.log` extension.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.98)]
    lr_decay: f64,
    #[arg(long)]
    steps_per_epoch: Option<usize>,
    #[arg(long)]
    exact_tdoa: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    est: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    clean: PathBuf,
    /// Mixture for the delay-and-sum baseline; `mix.wav` next to the scene
    /// file when omitted.
    #[arg(long)]
    mix: Option<PathBuf>,
    /// Score against this file channel's clean signal instead.
    #[arg(long)]
    ref_mic: Option<usize>,
    #[arg(long)]
    exact_tdoa: bool,
}

#[derive(Args)]
struct InfoArgs {
    /// `tiny`, `reference`, or a JSON model configuration.
    #[arg(long, default_value = "reference")]
    config: String,
    #[arg(long, default_value_t = 4)]
    mics: usize,
    #[arg(long, default_value_t = 17)]
    taps: usize,
    #[arg(long, default_value_t = 16000)]
    sample_rate: u32,
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<dfsnet_core::Error> for Failure {
    fn from(e: dfsnet_core::Error) -> Self {
        Failure::Data(e.into())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            eprintln!("{}", text.lines().next().unwrap_or("usage error"));
            return ExitCode::from(1);
        }
    };
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Enhance(a) => enhance(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Info(a) => info(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::from(2)
        }
    }
}

fn model_config(name: &str) -> std::result::Result<ModelConfig, Failure> {
    let cfg = match name {
        "reference" => ModelConfig::reference(),
        "tiny" => ModelConfig::tiny(),
        path => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("--config {path}: {e}")))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("--config {path}: {e}")))?
        }
    };
    cfg.validate().map_err(|e| usage(format!("--config: {e}")))?;
    Ok(cfg)
}

fn mono(samples: Vec<f64>, rate: u32) -> anyhow::Result<MultichannelBuffer> {
    Ok(MultichannelBuffer::from_mono(samples, rate)?)
}

fn to_f32(buf: &MultichannelBuffer) -> anyhow::Result<MultichannelBuffer> {
    let channels = buf
        .channels()
        .iter()
        .map(|ch| ch.iter().map(|v| *v as f32 as f64).collect())
        .collect();
    Ok(MultichannelBuffer::new(channels, buf.sample_rate())?)
}

/// Peak of the written mixture, −6 dBFS.
const PEAK_LEVEL: f64 = 0.5;

fn simulate(a: SimulateArgs) -> Outcome {
    if let Some(c) = a.mics.filter(|c| *c == 0) {
        return Err(usage(format!("--mics must be at least 1, got {c}")));
    }
    if !(a.duration > 0.0 && a.duration.is_finite()) {
        return Err(usage("--duration must be positive"));
    }
    if !(a.max_angle >= 0.0) {
        return Err(usage("--max-angle must be nonnegative"));
    }
    if a.taps % 2 == 0 {
        return Err(usage("--taps must be odd"));
    }
    let mut sampler = SceneSampler {
        num_mics: a.mics,
        ..Default::default()
    };
    if let Some(t) = a.t60 {
        if !(t > 0.0) {
            return Err(usage("--t60 must be positive"));
        }
        sampler.t60_range = (t, t);
    }
    if let Some(s) = a.snr {
        if !s.is_finite() {
            return Err(usage("--snr must be finite"));
        }
        sampler.snr_range = (s, s);
    }
    let spec = sampler.sample(a.seed);
    let len = (a.duration * spec.sample_rate as f64).round() as usize;
    let scene = synthesize_scene(&spec, len.max(1)).context("rendering scene")?;
    let meta = SceneMetadata::from_spec(spec, a.max_angle, a.seed ^ 0x5eed, a.taps)?;

    let peak = scene.mix.channels().iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > 0.0 { PEAK_LEVEL / peak } else { 1.0 };
    // stored components are exactly representable, so the stored mix is
    // their float32 sum
    let clean = to_f32(&scene.clean.linear_combination(gain, &scene.clean, 0.0)?)?;
    let noise = to_f32(&scene.noise.linear_combination(gain, &scene.noise, 0.0)?)?;
    let mix = to_f32(&clean.linear_combination(1.0, &noise, 1.0)?)?;

    std::fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("creating {}", a.out_dir.display()))?;
    let files: [(&str, &MultichannelBuffer); 3] = [("mix.wav", &mix), ("clean.wav", &clean), ("noise.wav", &noise)];
    let mut written = Vec::new();
    let result = (|| -> anyhow::Result<()> {
        for (name, buf) in files {
            let path = a.out_dir.join(name);
            write_wav(&path, buf, WavFormat::Float32)?;
            written.push(path);
        }
        save_scene_metadata(a.out_dir.join("scene.json"), &meta)?;
        Ok(())
    })();
    if let Err(e) = result {
        for p in written {
            let _ = std::fs::remove_file(p);
        }
        return Err(e.into());
    }
    println!(
        "wrote {} ({} mics, {:.2} s, T60 {:.2} s, SNR {:.1} dB)",
        a.out_dir.display(),
        meta.spec.num_mics(),
        len as f64 / meta.spec.sample_rate as f64,
        meta.spec.t60,
        meta.spec.snr_db
    );
    Ok(())
}

/// Loads a wav in file channel order and returns it reference-first.
fn load_scene_audio(path: &Path, meta: &SceneMetadata) -> anyhow::Result<MultichannelBuffer> {
    let buf = read_wav_expect(path, Some(meta.spec.num_mics()), Some(meta.spec.sample_rate))?;
    Ok(buf.permuted(&meta.permutation)?)
}

fn enhance(a: EnhanceArgs) -> Outcome {
    let weights = load_weights(&a.weights)?;
    let meta = load_scene_metadata(&a.scene)?;
    if weights.sample_rate != meta.spec.sample_rate {
        return Err(anyhow!(
            "weights expect {} Hz, scene is {} Hz",
            weights.sample_rate,
            meta.spec.sample_rate
        )
        .into());
    }
    let mix = load_scene_audio(&a.input, &meta)?;
    let plan = meta.steering_plan(a.exact_tdoa)?;
    let out = if a.batch {
        enhance_offline(&weights.params, &plan, &mix)?
    } else {
        enhance_streaming(Arc::new(weights.params), &plan, &mix)?
    };
    write_wav(&a.out, &mono(out, mix.sample_rate())?, a.format.into())?;
    Ok(())
}

fn scene_dirs(root: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if root.join("scene.json").is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .with_context(|| format!("reading {}", root.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("scene.json").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        bail!("no scene.json found under {}", root.display());
    }
    Ok(dirs)
}

fn training_item(dir: &Path, exact: bool) -> anyhow::Result<TrainingItem> {
    let meta = load_scene_metadata(dir.join("scene.json"))?;
    let mix = load_scene_audio(&dir.join("mix.wav"), &meta)?;
    let clean = load_scene_audio(&dir.join("clean.wav"), &meta)?;
    Ok(TrainingItem::from_clean(mix, &clean, meta.steering_plan(exact)?)?)
}

fn train(a: TrainArgs) -> Outcome {
    let cfg = model_config(&a.config)?;
    if a.epochs == 0 {
        return Err(usage("--epochs must be at least 1"));
    }
    if a.steps_per_epoch == Some(0) {
        return Err(usage("--steps-per-epoch must be at least 1"));
    }
    if !(a.lr > 0.0 && a.lr.is_finite()) || !(a.lr_decay > 0.0 && a.lr_decay <= 1.0) {
        return Err(usage("--lr must be positive and --lr-decay in (0, 1]"));
    }
    let dirs = scene_dirs(&a.data_dir)?;
    let items = dirs
        .iter()
        .map(|d| training_item(d, a.exact_tdoa).with_context(|| d.display().to_string()))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let rate = items[0].mix.sample_rate();
    let taps = load_scene_metadata(dirs[0].join("scene.json"))?.num_taps;
    if items.iter().any(|i| i.mix.sample_rate() != rate) {
        return Err(anyhow!("scenes have different sample rates").into());
    }
    let config = TrainConfig {
        learning_rate: a.lr,
        lr_decay: a.lr_decay,
        epochs: a.epochs,
        steps_per_epoch: a.steps_per_epoch,
        seed: a.seed,
    };
    let params = ModelParams::init(&cfg, a.seed)?;
    let (params, log) = train_loop(params, &items, &config)?;

    let log_path = a.log.unwrap_or_else(|| a.out.with_extension("log"));
    let file = WeightFile {
        params,
        num_taps: u32::try_from(taps).map_err(|_| anyhow!("tap count too large"))?,
        sample_rate: rate,
    };
    dfsnet_core::io::write_bytes_atomic(&log_path, log.to_text().as_bytes())?;
    if let Err(e) = save_weights(&a.out, &file) {
        let _ = std::fs::remove_file(&log_path);
        return Err(e.into());
    }
    for (epoch, score) in log.epoch_si_sdr.iter().enumerate() {
        println!("epoch {epoch}: mean SI-SDR {score:.2} dB");
    }
    println!("wrote {} and {}", a.out.display(), log_path.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Outcome {
    let meta = load_scene_metadata(&a.scene)?;
    let est = read_wav_expect(&a.est, Some(1), Some(meta.spec.sample_rate))?;
    let clean_file = read_wav_expect(&a.clean, Some(meta.spec.num_mics()), Some(meta.spec.sample_rate))?;
    let plan = meta.steering_plan(a.exact_tdoa)?;
    let (reference, label) = match a.ref_mic {
        Some(m) if m >= meta.spec.num_mics() => {
            return Err(usage(format!(
                "--ref-mic {m} out of range for {} microphones",
                meta.spec.num_mics()
            )))
        }
        Some(m) => (clean_file.channel(m).to_vec(), format!("clean mic {m}")),
        None => (
            make_target(&plan, &clean_file.permuted(&meta.permutation)?)?,
            "x_DS".to_string(),
        ),
    };
    let est = est.channel(0);
    if est.len() != reference.len() {
        return Err(anyhow!("estimate has {} samples, reference {}", est.len(), reference.len()).into());
    }
    println!("SI-SDR(est, {label}): {:.2} dB", si_sdr(est, &reference)?);

    let mix_path = a
        .mix
        .unwrap_or_else(|| a.scene.parent().unwrap_or(Path::new(".")).join("mix.wav"));
    if mix_path.is_file() {
        let mix = load_scene_audio(&mix_path, &meta)?;
        let baseline = delay_and_sum(&apply_steering(&plan, &mix)?);
        let base = si_sdr(&baseline, &reference)?;
        println!("SI-SDR(DS baseline, {label}): {base:.2} dB");
        println!("improvement: {:.2} dB", si_sdr(est, &reference)? - base);
    } else {
        println!("DS baseline skipped: {} not found", mix_path.display());
    }
    println!("note: PESQ and STOI are not built in; score the wav files with external tools");
    Ok(())
}

fn info(a: InfoArgs) -> Outcome {
    let cfg = model_config(&a.config)?;
    if a.mics == 0 {
        return Err(usage("--mics must be at least 1"));
    }
    if a.taps % 2 == 0 || a.sample_rate == 0 {
        return Err(usage("--taps must be odd and --sample-rate positive"));
    }
    let fs = a.sample_rate as f64;
    let params = count_params(&cfg);
    let macs = count_macs(&cfg, fs, a.mics);
    let lat = latency_report(&cfg, a.taps, fs);
    println!(
        "config: L={} N={} H={} P={} B={} R={}{}{}",
        cfg.frame_len,
        cfg.latent_dim,
        cfg.hidden_dim,
        cfg.partitions,
        cfg.num_blocks,
        cfg.norm_window,
        if cfg.shared_cells { " shared-cells" } else { "" },
        if cfg.encoder_bias { " encoder-bias" } else { "" },
    );
    println!("parameters: {params} ({:.2}M)", params as f64 / 1e6);
    println!("local: {:.3} GMAC/s per channel", macs.local_per_channel / 1e9);
    println!("global: {:.3} GMAC/s", macs.global / 1e9);
    println!("total (C={}): {:.3} GMAC/s", a.mics, macs.total / 1e9);
    println!(
        "latency: {:.1} ms frame + {:.1} ms fractional delay = {:.1} ms (compute budget {:.1} ms per hop)",
        lat.frame_latency_ms, lat.frac_filter_latency_ms, lat.algorithmic_total_ms, lat.max_compute_budget_ms
    );
    Ok(())
}

//! Command-line front end for the watermarking toolkit: build surrogate
//! codecs, derive and calibrate keys, embed and detect marks, apply attacks,
//! and run benchmark grids. Run parameters live in structured text (TOML)
//! config files; reports come out as delimited text plus JSON.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use tidemark::attack::AttackSpec;
use tidemark::audio::{load_wav, save_wav, si_snr, Waveform};
use tidemark::bench::{run_suite, tsv_string, write_json, write_tsv, BenchConfig};
use tidemark::codec::{load_codec, make_codec, save_codec, CodecSpec, SurrogateCodec};
use tidemark::detect::{score_ensemble_with, LatentView};
use tidemark::embed::{embed_joint, embed_single, EmbedConfig, EmbedTrace};
use tidemark::key::{calibrate, derive_axis, load_key, save_key, AxisMethod, SecretKey};
use tidemark::synth::{corpus_clip, make_corpus, Domain};

#[derive(Parser)]
#[command(name = "tidemark", version, about = "Latent-space audio watermarking toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    /// Axis through the widest codebook-cluster gap.
    Cluster,
    /// Leading principal component of the first codebook.
    Pca,
    /// Seeded random unit vector.
    Random,
}

impl From<MethodArg> for AxisMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Cluster => AxisMethod::Cluster,
            MethodArg::Pca => AxisMethod::Pca,
            MethodArg::Random => AxisMethod::Random,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ViewArg {
    /// Latents straight off the analysis (the default detection view).
    PreQuant,
    /// Latents after residual quantization.
    Quantized,
}

impl From<ViewArg> for LatentView {
    fn from(v: ViewArg) -> Self {
        match v {
            ViewArg::PreQuant => LatentView::PreQuant,
            ViewArg::Quantized => LatentView::Quantized,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    /// Broadband shaped noise.
    Ambient,
    /// Formant-like bursts with pauses.
    SpeechLike,
    /// Harmonic tones over a soft noise floor.
    MusicLike,
}

impl From<DomainArg> for Domain {
    fn from(d: DomainArg) -> Self {
        match d {
            DomainArg::Ambient => Domain::Ambient,
            DomainArg::SpeechLike => Domain::SpeechLike,
            DomainArg::MusicLike => Domain::MusicLike,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build a surrogate codec from a spec file and save it.
    MakeCodec {
        /// TOML file with the codec spec; omitted fields use the defaults,
        /// omitted file means the default spec.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output codec file (single-file binary format).
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive a secret key (axis + target) bound to a codec.
    Keygen {
        /// Codec file the key is derived from and bound to.
        #[arg(long)]
        codec: PathBuf,
        /// Axis derivation method.
        #[arg(long, value_enum, default_value = "cluster")]
        method: MethodArg,
        /// Seed for the random method; ignored by the others.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Target alignment score embedded keys are driven toward.
        #[arg(long, default_value_t = 1.5)]
        gamma: f64,
        /// Output key file (structured text, versioned).
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit detection thresholds for a key on a null corpus of clean audio.
    Calibrate {
        /// Codec file the key is bound to.
        #[arg(long)]
        codec: PathBuf,
        /// Key file to calibrate.
        #[arg(long)]
        key: PathBuf,
        /// Threshold offset in null standard deviations (tau = mu + k sigma).
        #[arg(long, default_value_t = 1.5)]
        k: f64,
        /// Directory of WAV files to calibrate on; without it a seeded
        /// synthetic null corpus at the codec rate is generated.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Synthetic null corpus size.
        #[arg(long, default_value_t = 64)]
        null_count: usize,
        /// Synthetic null clip length in seconds.
        #[arg(long, default_value_t = 3.0)]
        null_seconds: f64,
        /// Synthetic null corpus seed.
        #[arg(long, default_value_t = 7_000)]
        null_seed: u64,
        /// Output key file with the fitted statistics attached.
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed a watermark into a WAV file.
    Embed {
        /// Input WAV.
        #[arg(long)]
        input: PathBuf,
        /// Codec file; repeat together with --key for a committee.
        #[arg(long, required = true)]
        codec: Vec<PathBuf>,
        /// Key file, one per --codec, in the same order.
        #[arg(long, required = true)]
        key: Vec<PathBuf>,
        /// TOML file with optimizer settings; omitted fields use the
        /// defaults, omitted file means all defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output WAV.
        #[arg(long)]
        output: PathBuf,
        /// Optional per-step trace as tab-separated text with columns:
        /// step, loss, sup norm of the perturbation, then one projection
        /// score column per committee codec.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Test a WAV file for the watermark. Exit status encodes the verdict:
    /// 0 detected, 1 not detected, 2 error.
    Detect {
        /// Suspect WAV.
        #[arg(long)]
        input: PathBuf,
        /// Codec file; repeat together with --key for a committee.
        #[arg(long, required = true)]
        codec: Vec<PathBuf>,
        /// Calibrated key file, one per --codec, in the same order.
        #[arg(long, required = true)]
        key: Vec<PathBuf>,
        /// Which latents to project.
        #[arg(long, value_enum, default_value = "pre-quant")]
        view: ViewArg,
        /// Also write the report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Apply a removal attack to a WAV file.
    Attack {
        /// Input WAV.
        #[arg(long)]
        input: PathBuf,
        /// TOML file with the attack spec (kind plus its parameters).
        #[arg(long)]
        spec: PathBuf,
        /// Output WAV.
        #[arg(long)]
        output: PathBuf,
    },
    /// Run a benchmark grid from a config file.
    Bench {
        /// TOML file with the full run description: datasets, codecs,
        /// methods, attacks, detector, split, and optimizer settings.
        #[arg(long)]
        config: PathBuf,
        /// Directory the report files go to (report.tsv, report.json).
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Generate a seeded synthetic corpus as WAV files.
    Corpus {
        /// Sample rate in Hz.
        #[arg(long)]
        rate: u32,
        /// Clip length in seconds.
        #[arg(long)]
        seconds: f64,
        /// Number of clips; clip i uses seed + i.
        #[arg(long)]
        count: usize,
        /// Base seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Restrict to one domain; omitted cycles all three.
        #[arg(long, value_enum)]
        domain: Option<DomainArg>,
        /// Directory the clips go to (clip_000.wav, ...).
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version land here too; only real usage errors
            // take the error exit.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::MakeCodec { spec, out } => cmd_make_codec(spec.as_deref(), &out),
        Command::Keygen {
            codec,
            method,
            seed,
            gamma,
            out,
        } => cmd_keygen(&codec, method, seed, gamma, &out),
        Command::Calibrate {
            codec,
            key,
            k,
            corpus,
            null_count,
            null_seconds,
            null_seed,
            out,
        } => cmd_calibrate(&codec, &key, k, corpus.as_deref(), null_count, null_seconds, null_seed, &out),
        Command::Embed {
            input,
            codec,
            key,
            config,
            output,
            trace,
        } => cmd_embed(&input, &codec, &key, config.as_deref(), &output, trace.as_deref()),
        Command::Detect {
            input,
            codec,
            key,
            view,
            report,
        } => cmd_detect(&input, &codec, &key, view.into(), report.as_deref()),
        Command::Attack { input, spec, output } => cmd_attack(&input, &spec, &output),
        Command::Bench { config, out_dir } => cmd_bench(&config, &out_dir),
        Command::Corpus {
            rate,
            seconds,
            count,
            seed,
            domain,
            out_dir,
        } => cmd_corpus(rate, seconds, count, seed, domain.map(Domain::from), &out_dir),
    }
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {what} file {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {what} file {}", path.display()))
}

fn cmd_make_codec(spec: Option<&Path>, out: &Path) -> Result<ExitCode> {
    let spec: CodecSpec = match spec {
        Some(path) => read_toml(path, "codec spec")?,
        None => CodecSpec::default(),
    };
    let codec = make_codec(&spec)?;
    save_codec(&codec, out)?;
    println!("codec: {}", codec.spec().identity());
    println!("saved: {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_keygen(codec: &Path, method: MethodArg, seed: u64, gamma: f64, out: &Path) -> Result<ExitCode> {
    let codec = load_codec(codec)?;
    let axis = derive_axis(&codec, method.into(), seed)?;
    let key = SecretKey {
        axis,
        stats: None,
        gamma,
    };
    save_key(&key, out)?;
    println!("key bound to: {}", codec.spec().identity());
    println!("saved: {}", out.display());
    Ok(ExitCode::SUCCESS)
}

/// All WAV files in a directory, in name order.
fn load_wav_dir(dir: &Path) -> Result<Vec<Waveform>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading corpus directory {}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .map(|e| e.eq_ignore_ascii_case("wav"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no WAV files in {}", dir.display());
    }
    paths
        .iter()
        .map(|p| load_wav(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_calibrate(
    codec_path: &Path,
    key_path: &Path,
    k: f64,
    corpus: Option<&Path>,
    null_count: usize,
    null_seconds: f64,
    null_seed: u64,
    out: &Path,
) -> Result<ExitCode> {
    let codec = load_codec(codec_path)?;
    let mut key = load_key(key_path)?;
    bind_check(&codec, &key, key_path)?;
    let clips = match corpus {
        Some(dir) => load_wav_dir(dir)?,
        None => make_corpus(codec.spec().rate, null_seconds, null_count, null_seed)?,
    };
    let stats = calibrate(&codec, &key.axis, &clips, k)?;
    println!(
        "null fit over {} clips: mu {:.6}, sigma {:.6}, tau {:.6}, alpha {:.6}",
        clips.len(),
        stats.mu,
        stats.sigma,
        stats.tau,
        stats.alpha
    );
    key.stats = Some(stats);
    save_key(&key, out)?;
    println!("saved: {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn bind_check(codec: &SurrogateCodec, key: &SecretKey, key_path: &Path) -> Result<()> {
    let id = codec.spec().identity();
    if key.axis.codec_id != id {
        bail!(
            "key {} is bound to {}, not to {id}",
            key_path.display(),
            key.axis.codec_id
        );
    }
    Ok(())
}

/// Load --codec/--key pairs in order, checking counts and bindings.
fn load_pairs(codecs: &[PathBuf], keys: &[PathBuf]) -> Result<Vec<(SurrogateCodec, SecretKey)>> {
    if codecs.len() != keys.len() {
        bail!(
            "{} --codec and {} --key arguments; they pair up one to one",
            codecs.len(),
            keys.len()
        );
    }
    codecs
        .iter()
        .zip(keys)
        .map(|(c, k)| {
            let codec = load_codec(c).with_context(|| format!("loading {}", c.display()))?;
            let key = load_key(k).with_context(|| format!("loading {}", k.display()))?;
            bind_check(&codec, &key, k)?;
            Ok((codec, key))
        })
        .collect()
}

fn write_trace(path: &Path, trace: &EmbedTrace) -> Result<()> {
    let mut text = String::from("step\tloss\tdelta_sup");
    for i in 1..=trace.scores.first().map_or(0, Vec::len) {
        text.push_str(&format!("\tp{i}"));
    }
    text.push('\n');
    for (step, loss) in trace.loss.iter().enumerate() {
        text.push_str(&format!("{step}\t{loss:.9}\t{:.9}", trace.delta_sup[step]));
        for p in &trace.scores[step] {
            text.push_str(&format!("\t{p:.9}"));
        }
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing trace {}", path.display()))?;
    Ok(())
}

fn cmd_embed(
    input: &Path,
    codecs: &[PathBuf],
    keys: &[PathBuf],
    config: Option<&Path>,
    output: &Path,
    trace_path: Option<&Path>,
) -> Result<ExitCode> {
    let pairs = load_pairs(codecs, keys)?;
    let cfg: EmbedConfig = match config {
        Some(path) => read_toml(path, "embed config")?,
        None => EmbedConfig::default(),
    };
    let wave = load_wav(input)?;
    let (marked, trace) = if pairs.len() == 1 {
        embed_single(&wave, &pairs[0].0, &pairs[0].1, &cfg)?
    } else {
        let committee: Vec<(&SurrogateCodec, &SecretKey)> =
            pairs.iter().map(|(c, k)| (c, k)).collect();
        embed_joint(&wave, &committee, &cfg)?
    };
    save_wav(output, &marked)?;
    let snr = si_snr(&wave, &marked)?;
    println!(
        "loss {:.6} -> {:.6} (best step {} of {}), budget {:.6}, si-snr {:.2} dB",
        trace.loss[0],
        trace.loss[trace.best_step],
        trace.best_step,
        trace.loss.len() - 1,
        trace.eps,
        snr
    );
    println!("saved: {}", output.display());
    if let Some(path) = trace_path {
        write_trace(path, &trace)?;
        println!("trace: {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_detect(
    input: &Path,
    codecs: &[PathBuf],
    keys: &[PathBuf],
    view: LatentView,
    report: Option<&Path>,
) -> Result<ExitCode> {
    let pairs = load_pairs(codecs, keys)?;
    let committee: Vec<(&SurrogateCodec, &SecretKey)> = pairs.iter().map(|(c, k)| (c, k)).collect();
    let wave = load_wav(input)?;
    let result = score_ensemble_with(&wave, &committee, view)?;
    let mut text = format!("clip: {}\n", input.display());
    for r in &result.per_codec {
        text.push_str(&format!(
            "codec: {}\n  score: {:.6}\n  margin: {:.6}\n  detected: {}\n",
            r.codec_id, r.raw_score, r.margin, r.detected
        ));
    }
    text.push_str(&format!(
        "ensemble_score: {:.6}\ndetected: {}\n",
        result.score, result.detected
    ));
    print!("{text}");
    if let Some(path) = report {
        fs::write(path, &text).with_context(|| format!("writing report {}", path.display()))?;
    }
    Ok(if result.detected {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_attack(input: &Path, spec: &Path, output: &Path) -> Result<ExitCode> {
    let spec: AttackSpec = read_toml(spec, "attack spec")?;
    let attack = spec.resolve()?;
    let wave = load_wav(input)?;
    let attacked = attack.apply(&wave)?;
    save_wav(output, &attacked)?;
    if attacked.rate == wave.rate && attacked.len() == wave.len() {
        println!("{}: si-snr {:.2} dB", attack.label(), si_snr(&wave, &attacked)?);
    } else {
        println!("{}", attack.label());
    }
    println!("saved: {}", output.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(config: &Path, out_dir: &Path) -> Result<ExitCode> {
    let config: BenchConfig = read_toml(config, "bench config")?;
    let report = run_suite(&config)?;
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let tsv = out_dir.join("report.tsv");
    let json = out_dir.join("report.json");
    write_tsv(&report, &tsv)?;
    write_json(&report, &json)?;
    print!("{}", tsv_string(&report));
    if !report.errors.is_empty() {
        eprintln!("{} clip errors; see {}", report.errors.len(), json.display());
    }
    println!("saved: {} and {}", tsv.display(), json.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_corpus(
    rate: u32,
    seconds: f64,
    count: usize,
    seed: u64,
    domain: Option<Domain>,
    out_dir: &Path,
) -> Result<ExitCode> {
    if count == 0 {
        bail!("count must be at least 1");
    }
    let clips = match domain {
        Some(domain) => (0..count)
            .map(|i| corpus_clip(domain, rate, seconds, seed + i as u64))
            .collect::<tidemark::Result<Vec<_>>>()?,
        None => make_corpus(rate, seconds, count, seed)?,
    };
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    for (i, clip) in clips.iter().enumerate() {
        save_wav(out_dir.join(format!("clip_{i:03}.wav")), clip)?;
    }
    println!("{count} clips in {}", out_dir.display());
    Ok(ExitCode::SUCCESS)
}

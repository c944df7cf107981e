//! Seeded synthetic signals.
//!
//! Two consumers: codec fitting wants a long pink-noise conditioning signal,
//! and calibration/benchmarks want corpora of short clips with some spectral
//! variety. Real datasets are deliberately out of scope; every generator
//! here is a pure function of its arguments, so corpora are reproducible
//! across machines and runs.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::Waveform;
use crate::error::{Error, Result};

/// Seed for the built-in calibration corpus ("null" in ASCII).
pub const DEFAULT_NULL_SEED: u64 = 0x6e75_6c6c;

/// Number of clips in the built-in calibration corpus.
pub const DEFAULT_NULL_CLIPS: usize = 64;

/// Duration of generated corpus clips, in seconds.
pub const CLIP_SECONDS: f64 = 3.0;

/// RMS level every corpus clip is normalised to.
pub const CLIP_RMS: f64 = 0.1;

/// Spectral envelope family for a synthetic clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Broadband 1/f noise with slow amplitude motion and a low hum.
    Ambient,
    /// Gated harmonic stack with formant-shaped partials and breath noise.
    SpeechLike,
    /// Chord tones on a note grid with decaying envelopes over quiet noise.
    MusicLike,
}

impl Domain {
    /// The fixed rotation used when a corpus cycles through domains.
    pub const ALL: [Domain; 3] = [Domain::Ambient, Domain::SpeechLike, Domain::MusicLike];
}

fn sample_count(rate: u32, seconds: f64) -> Result<usize> {
    if rate == 0 {
        return Err(Error::Config("sample rate must be positive".into()));
    }
    if !(seconds.is_finite() && seconds > 0.0) {
        return Err(Error::Config(format!("invalid duration {seconds}")));
    }
    let n = (seconds * rate as f64).round() as usize;
    if n == 0 {
        return Err(Error::Config(format!(
            "duration {seconds}s yields no samples at {rate} Hz"
        )));
    }
    Ok(n)
}

/// Rescale a signal to an exact RMS level.
pub fn scale_to_rms(wave: Waveform, target: f64) -> Result<Waveform> {
    if !(target.is_finite() && target > 0.0) {
        return Err(Error::Config(format!("invalid target RMS {target}")));
    }
    let current = crate::audio::rms(&wave)?;
    if current == 0.0 {
        return Err(Error::Degenerate("cannot rescale an all-zero signal".into()));
    }
    let gain = target / current;
    let samples = wave.samples.iter().map(|s| s * gain).collect();
    Waveform::new(samples, wave.rate)
}

/// 1/f-shaped noise from the classic cascade of first-order sections.
///
/// The filter coefficients are tuned for audio rates; the slope is close to
/// -3 dB/octave across the band the codecs care about. Output level is
/// arbitrary, callers normalise with [`scale_to_rms`].
pub fn pink_noise(rate: u32, seconds: f64, seed: u64) -> Result<Waveform> {
    let n = sample_count(rate, seconds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = [0.0f64; 7];
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let white: f64 = StandardNormal.sample(&mut rng);
        b[0] = 0.99886 * b[0] + white * 0.0555179;
        b[1] = 0.99332 * b[1] + white * 0.0750759;
        b[2] = 0.96900 * b[2] + white * 0.1538520;
        b[3] = 0.86650 * b[3] + white * 0.3104856;
        b[4] = 0.55000 * b[4] + white * 0.5329522;
        b[5] = -0.7616 * b[5] - white * 0.0168980;
        let pink = b.iter().sum::<f64>() + white * 0.5362;
        b[6] = white * 0.115926;
        samples.push(pink * 0.11);
    }
    Waveform::new(samples, rate)
}

/// Highest partial frequency a generator will place, in Hz.
fn band_limit(rate: u32) -> f64 {
    0.45 * rate as f64
}

fn ambient_clip(rate: u32, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let bed = {
        let seed = rng.random_range(0..u64::MAX);
        pink_noise(rate, n as f64 / rate as f64, seed)?
    };
    let am_hz = rng.random_range(0.1..0.5);
    let am_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let am_depth = rng.random_range(0.2..0.5);
    let hum_hz: f64 = rng.random_range(40.0..120.0);
    let hum_hz = hum_hz.min(band_limit(rate));
    let hum_detune = hum_hz * rng.random_range(1.005..1.02);
    let hum_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let dt = 1.0 / rate as f64;
    let out = bed
        .samples
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let t = i as f64 * dt;
            let env = 1.0 + am_depth * (std::f64::consts::TAU * am_hz * t + am_phase).sin();
            let hum = 0.25
                * ((std::f64::consts::TAU * hum_hz * t + hum_phase).sin()
                    + 0.6 * (std::f64::consts::TAU * hum_detune * t).sin());
            p * env + hum * 0.2
        })
        .collect();
    Ok(out)
}

fn speech_clip(rate: u32, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let f0_base = rng.random_range(100.0..220.0);
    let vibrato_hz = rng.random_range(4.0..7.0);
    let vibrato_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let drift_hz = rng.random_range(0.15..0.4);
    let drift_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let syllable_hz = rng.random_range(2.5..4.0);
    let syllable_phase = rng.random_range(0.0..std::f64::consts::TAU);
    // Two formant-style bumps shape the partial amplitudes.
    let f1 = rng.random_range(300.0..800.0);
    let f2 = rng.random_range(1000.0..2400.0);
    let (bw1, bw2) = (180.0, 420.0);
    let limit = band_limit(rate);
    let max_harmonics = ((limit / (f0_base * 1.15)).floor() as usize).clamp(1, 14);
    let amps: Vec<f64> = (1..=max_harmonics)
        .map(|h| {
            let f = h as f64 * f0_base;
            let formant = (-((f - f1) / bw1).powi(2)).exp() + (-((f - f2) / bw2).powi(2)).exp();
            (0.2 + formant) / h as f64
        })
        .collect();
    let dt = 1.0 / rate as f64;
    let mut phase = rng.random_range(0.0..std::f64::consts::TAU);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * dt;
        let f0 = f0_base
            * (1.0
                + 0.06 * (std::f64::consts::TAU * vibrato_hz * t + vibrato_phase).sin()
                + 0.05 * (std::f64::consts::TAU * drift_hz * t + drift_phase).sin());
        phase += std::f64::consts::TAU * f0 * dt;
        // Raised gate with a dead zone, so the clip has actual pauses.
        let g = (std::f64::consts::TAU * syllable_hz * t + syllable_phase).sin();
        let env = ((g - 0.1).max(0.0) / 0.9).powf(0.7);
        let mut voiced = 0.0;
        for (h, &a) in amps.iter().enumerate() {
            voiced += a * ((h + 1) as f64 * phase).sin();
        }
        let breath: f64 = StandardNormal.sample(rng);
        out.push(env * (voiced + 0.04 * breath));
    }
    out
}

fn music_clip(rate: u32, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let bed = {
        let seed = rng.random_range(0..u64::MAX);
        pink_noise(rate, n as f64 / rate as f64, seed)?
    };
    let note_len = rng.random_range(0.4..0.7);
    let note_samples = ((note_len * rate as f64) as usize).max(1);
    let limit = band_limit(rate);
    let dt = 1.0 / rate as f64;
    let mut out = vec![0.0f64; n];
    let mut start = 0usize;
    while start < n {
        let end = (start + note_samples).min(n);
        // Root drawn from an equal-tempered grid, minor/major triad on top.
        let midi = rng.random_range(45..70);
        let third = if rng.random_range(0..2) == 0 { 3 } else { 4 };
        let degrees = [0, third, 7];
        let decay = rng.random_range(2.0..5.0);
        for &deg in &degrees {
            let f = 440.0 * ((midi + deg - 69) as f64 / 12.0).exp2();
            let detune = rng.random_range(0.999..1.001);
            let phase0 = rng.random_range(0.0..std::f64::consts::TAU);
            for h in 1..=3u32 {
                let fh = f * detune * h as f64;
                if fh > limit {
                    break;
                }
                let amp = 1.0 / (h * h) as f64;
                for i in start..end {
                    let tt = (i - start) as f64 * dt;
                    // 10 ms attack, exponential decay toward a sustain floor.
                    let attack = (tt / 0.01).min(1.0);
                    let env = attack * (0.3 + 0.7 * (-decay * tt).exp());
                    out[i] += amp * env * (std::f64::consts::TAU * fh * (i as f64 * dt) + phase0).sin();
                }
            }
        }
        start = end;
    }
    for (o, p) in out.iter_mut().zip(&bed.samples) {
        *o = *o * 0.25 + p * 0.12;
    }
    Ok(out)
}

/// One synthetic clip of the given domain, normalised to [`CLIP_RMS`].
pub fn corpus_clip(domain: Domain, rate: u32, seconds: f64, seed: u64) -> Result<Waveform> {
    let n = sample_count(rate, seconds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = match domain {
        Domain::Ambient => ambient_clip(rate, n, &mut rng)?,
        Domain::SpeechLike => speech_clip(rate, n, &mut rng),
        Domain::MusicLike => music_clip(rate, n, &mut rng)?,
    };
    scale_to_rms(Waveform::new(samples, rate)?, CLIP_RMS)
}

/// A corpus of `count` clips cycling through the three domains.
///
/// Clip `i` uses seed `seed + i`, so corpora with overlapping seed ranges
/// share clips; pick disjoint base seeds for disjoint corpora.
pub fn make_corpus(rate: u32, seconds: f64, count: usize, seed: u64) -> Result<Vec<Waveform>> {
    if count == 0 {
        return Err(Error::Config("corpus size must be positive".into()));
    }
    (0..count)
        .map(|i| {
            let domain = Domain::ALL[i % Domain::ALL.len()];
            corpus_clip(domain, rate, seconds, seed.wrapping_add(i as u64))
        })
        .collect()
}

/// The built-in calibration corpus: shaped noise and tones at the codec rate.
pub fn default_null_corpus(rate: u32) -> Result<Vec<Waveform>> {
    make_corpus(rate, CLIP_SECONDS, DEFAULT_NULL_CLIPS, DEFAULT_NULL_SEED)
}

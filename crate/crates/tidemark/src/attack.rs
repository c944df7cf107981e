//! Signal-level attacks used to stress a mark: additive noise, gain changes,
//! low-pass filtering, sample-rate round trips, and the lossy codec round
//! trip itself. Also home to the classic additive-pattern baseline these
//! schemes are contrasted with.
//!
//! Every attack is deterministic given its input and parameters (the noise
//! attack takes an explicit seed), so benchmark tables are reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio::{self, Waveform};
use crate::codec::{make_codec, CodecSpec, SurrogateCodec};
use crate::{Error, Result};

/// FIR length of the low-pass attack; odd so the kernel has an exact center.
pub const LOWPASS_TAPS: usize = 255;

/// Kaiser shape parameter for the low-pass kernel. At 255 taps this leaves a
/// transition band around 2% of the sample rate and a single-pass stopband
/// floor near -80 dB, far below the documented -40 dB requirement.
const LOWPASS_KAISER_BETA: f64 = 8.0;

/// Detection threshold for the additive baseline's matched filter.
pub const BASELINE_THRESHOLD: f64 = 0.1;

/// Default distortion budget of the additive baseline, in dB. Deliberately
/// generous (louder than the latent-domain embedder's default) so that when
/// the pattern still fails to survive resynthesis, loudness is ruled out as
/// the excuse.
pub const BASELINE_SDR_DB: f64 = 15.0;

/// Serializable description of one attack, as it appears in benchmark
/// configs and report rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackSpec {
    /// Additive seeded white Gaussian noise at a target SNR in dB.
    Gaussian { snr_db: f64, seed: u64 },
    /// Multiply every sample by a constant factor; factor 1 is the identity
    /// attack used as a benchmark control.
    Amplitude { factor: f64 },
    /// Zero-phase low-pass at the given cutoff in Hz.
    LowPass { cutoff_hz: f64 },
    /// Round trip through an intermediate sample rate.
    Resample { rate: u32 },
    /// Lossy round trip through a codec built from the inline spec.
    Resynthesis { codec: CodecSpec },
}

impl AttackSpec {
    /// Check the rate-independent parameter ranges. The low-pass cutoff is
    /// additionally checked against the Nyquist rate of each waveform it is
    /// applied to.
    pub fn validate(&self) -> Result<()> {
        match self {
            AttackSpec::Gaussian { snr_db, .. } => {
                if !snr_db.is_finite() {
                    return Err(Error::Config(format!(
                        "gaussian attack needs a finite snr, got {snr_db} dB"
                    )));
                }
            }
            AttackSpec::Amplitude { factor } => {
                if !(factor.is_finite() && *factor > 0.0) {
                    return Err(Error::Config(format!(
                        "amplitude factor must be positive and finite, got {factor}"
                    )));
                }
            }
            AttackSpec::LowPass { cutoff_hz } => {
                if !(cutoff_hz.is_finite() && *cutoff_hz > 0.0) {
                    return Err(Error::Config(format!(
                        "low-pass cutoff must be positive and finite, got {cutoff_hz} Hz"
                    )));
                }
            }
            AttackSpec::Resample { rate } => {
                if *rate == 0 {
                    return Err(Error::Config(
                        "resample attack needs a positive intermediate rate".into(),
                    ));
                }
            }
            AttackSpec::Resynthesis { codec } => codec.validate()?,
        }
        Ok(())
    }

    /// Short row label for report tables, e.g. `GAU60`, `AMP0.5`, `LPF4000`,
    /// `RSM16000`, `RESYN:<codec identity>`.
    pub fn label(&self) -> String {
        match self {
            AttackSpec::Gaussian { snr_db, .. } => format!("GAU{snr_db}"),
            AttackSpec::Amplitude { factor } => format!("AMP{factor}"),
            AttackSpec::LowPass { cutoff_hz } => format!("LPF{cutoff_hz}"),
            AttackSpec::Resample { rate } => format!("RSM{rate}"),
            AttackSpec::Resynthesis { codec } => format!("RESYN:{}", codec.identity()),
        }
    }

    /// Validate and build the runnable attack; for the resynthesis attack
    /// this constructs (and fits) the codec once, so callers can reuse it
    /// across a whole corpus.
    pub fn resolve(&self) -> Result<Attack> {
        self.validate()?;
        Ok(match self {
            AttackSpec::Gaussian { snr_db, seed } => Attack::Gaussian {
                snr_db: *snr_db,
                seed: *seed,
            },
            AttackSpec::Amplitude { factor } => Attack::Amplitude { factor: *factor },
            AttackSpec::LowPass { cutoff_hz } => Attack::LowPass {
                cutoff_hz: *cutoff_hz,
            },
            AttackSpec::Resample { rate } => Attack::Resample { rate: *rate },
            AttackSpec::Resynthesis { codec } => Attack::Resynthesis {
                codec: Box::new(make_codec(codec)?),
            },
        })
    }
}

/// A resolved, runnable attack. Identical to [`AttackSpec`] except that the
/// resynthesis variant holds the constructed codec instead of its spec.
#[derive(Debug, Clone)]
pub enum Attack {
    Gaussian { snr_db: f64, seed: u64 },
    Amplitude { factor: f64 },
    LowPass { cutoff_hz: f64 },
    Resample { rate: u32 },
    Resynthesis { codec: Box<SurrogateCodec> },
}

impl Attack {
    pub fn apply(&self, wave: &Waveform) -> Result<Waveform> {
        match self {
            Attack::Gaussian { snr_db, seed } => attack_gaussian(wave, *snr_db, *seed),
            Attack::Amplitude { factor } => attack_amplitude(wave, *factor),
            Attack::LowPass { cutoff_hz } => attack_lowpass(wave, *cutoff_hz),
            Attack::Resample { rate } => attack_resample(wave, *rate),
            Attack::Resynthesis { codec } => attack_resynthesis(wave, codec),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Attack::Gaussian { snr_db, .. } => format!("GAU{snr_db}"),
            Attack::Amplitude { factor } => format!("AMP{factor}"),
            Attack::LowPass { cutoff_hz } => format!("LPF{cutoff_hz}"),
            Attack::Resample { rate } => format!("RSM{rate}"),
            Attack::Resynthesis { codec } => format!("RESYN:{}", codec.spec().identity()),
        }
    }
}

/// Add seeded white Gaussian noise with power `signal power / 10^(snr/10)`.
pub fn attack_gaussian(wave: &Waveform, snr_db: f64, seed: u64) -> Result<Waveform> {
    if !snr_db.is_finite() {
        return Err(Error::Config(format!(
            "gaussian attack needs a finite snr, got {snr_db} dB"
        )));
    }
    let signal_rms = audio::rms(wave)?;
    if signal_rms <= 0.0 {
        return Err(Error::Degenerate(
            "gaussian attack on an all-zero signal: the snr target is undefined".into(),
        ));
    }
    let noise_rms = signal_rms * 10f64.powf(-snr_db / 20.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = wave
        .samples
        .iter()
        .map(|&s| {
            let e: f64 = StandardNormal.sample(&mut rng);
            s + noise_rms * e
        })
        .collect();
    Waveform::new(samples, wave.rate)
}

/// Multiply every sample by `factor`, with no re-normalization.
pub fn attack_amplitude(wave: &Waveform, factor: f64) -> Result<Waveform> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(Error::Config(format!(
            "amplitude factor must be positive and finite, got {factor}"
        )));
    }
    let samples = wave.samples.iter().map(|s| s * factor).collect();
    Waveform::new(samples, wave.rate)
}

/// Zero-phase low-pass: a centered Kaiser-windowed sinc FIR applied twice.
///
/// The kernel is symmetric, so centered convolution is already linear-phase
/// with the delay removed; applying it twice squares the magnitude response,
/// matching a forward-backward pass. Edges are mirror-extended and the kernel
/// is normalized to unit sum, so DC passes exactly.
pub fn attack_lowpass(wave: &Waveform, cutoff_hz: f64) -> Result<Waveform> {
    let nyquist = wave.rate as f64 / 2.0;
    if !(cutoff_hz.is_finite() && cutoff_hz > 0.0 && cutoff_hz < nyquist) {
        return Err(Error::Config(format!(
            "low-pass cutoff must lie in (0, {nyquist}) Hz at {} Hz, got {cutoff_hz}",
            wave.rate
        )));
    }
    if wave.is_empty() {
        return Err(Error::Empty("low-pass input"));
    }
    let kernel = lowpass_kernel(cutoff_hz / wave.rate as f64);
    let once = convolve_mirrored(&wave.samples, &kernel);
    let twice = convolve_mirrored(&once, &kernel);
    Waveform::new(twice, wave.rate)
}

/// Centered Kaiser-windowed sinc with unit sum; `normalized_cutoff` is in
/// cycles per sample, in (0, 0.5).
fn lowpass_kernel(normalized_cutoff: f64) -> Vec<f64> {
    let center = (LOWPASS_TAPS - 1) as f64 / 2.0;
    let i0_beta = audio::bessel_i0(LOWPASS_KAISER_BETA);
    let two_fc = 2.0 * normalized_cutoff;
    let mut kernel: Vec<f64> = (0..LOWPASS_TAPS)
        .map(|k| {
            let t = k as f64 - center;
            let x = two_fc * t;
            let sinc = if x == 0.0 {
                1.0
            } else {
                (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
            };
            let u = t / center;
            let window = audio::bessel_i0(LOWPASS_KAISER_BETA * (1.0 - u * u).sqrt()) / i0_beta;
            two_fc * sinc * window
        })
        .collect();
    let sum: f64 = kernel.iter().sum();
    for h in &mut kernel {
        *h /= sum;
    }
    kernel
}

/// Centered convolution with mirror extension at both edges; output length
/// equals input length.
fn convolve_mirrored(x: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = x.len() as i64;
    let half = (kernel.len() / 2) as i64;
    let fold = |mut j: i64| -> usize {
        // Triangular fold with period 2(n-1): reflects about both endpoints
        // without duplicating them, for any input length >= 1.
        if n == 1 {
            return 0;
        }
        let period = 2 * (n - 1);
        j = j.rem_euclid(period);
        if j >= n {
            j = period - j;
        }
        j as usize
    };
    (0..n)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, &h)| h * x[fold(i + k as i64 - half)])
                .sum()
        })
        .collect()
}

/// Resample to `intermediate_rate` and back to the original rate; the output
/// is trimmed or zero-padded to the input length.
pub fn attack_resample(wave: &Waveform, intermediate_rate: u32) -> Result<Waveform> {
    if intermediate_rate == 0 {
        return Err(Error::Config(
            "resample attack needs a positive intermediate rate".into(),
        ));
    }
    let down = audio::resample(wave, intermediate_rate)?;
    let mut back = audio::resample(&down, wave.rate)?;
    back.samples.resize(wave.len(), 0.0);
    Ok(back)
}

/// The lossy codec round trip as an attack; the codec handles the sample-rate
/// round trip and length fitting itself.
pub fn attack_resynthesis(wave: &Waveform, codec: &SurrogateCodec) -> Result<Waveform> {
    codec.resynthesize(wave)
}

/// Unit-RMS seeded Gaussian pattern; the additive baseline's secret.
fn baseline_pattern(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pattern: Vec<f64> = (0..len)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut rng);
            e
        })
        .collect();
    let rms = (pattern.iter().map(|x| x * x).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        for x in &mut pattern {
            *x /= rms;
        }
    }
    pattern
}

/// Matched-filter score of `wave` against the seeded baseline pattern.
///
/// The score is the least-squares coefficient of the pattern in the signal,
/// divided by the gain the embedder would have used at this signal's level:
/// `<y, p> / (g * |p|^2)` with `g = rms(y) * 10^(-sdr/20)`. A freshly marked
/// clip scores close to 1, an unrelated clip close to 0, and the estimate of
/// `g` from the received signal makes the score invariant to positive
/// rescaling. Detection threshold: [`BASELINE_THRESHOLD`].
pub fn baseline_score(wave: &Waveform, seed: u64, sdr_db: f64) -> Result<f64> {
    if !sdr_db.is_finite() {
        return Err(Error::Config(format!(
            "baseline needs a finite sdr target, got {sdr_db} dB"
        )));
    }
    let expected_gain = audio::rms(wave)? * 10f64.powf(-sdr_db / 20.0);
    if expected_gain <= 0.0 {
        // Silence carries no pattern; score it as a clean miss.
        return Ok(0.0);
    }
    let pattern = baseline_pattern(wave.len(), seed);
    let dot: f64 = wave.samples.iter().zip(&pattern).map(|(y, p)| y * p).sum();
    let pattern_sq: f64 = pattern.iter().map(|p| p * p).sum();
    Ok(dot / (expected_gain * pattern_sq))
}

/// The classic time-domain baseline: add a seeded pseudo-random pattern
/// scaled to the SDR budget, and report the matched-filter score of the
/// marked clip (which is near 1 by construction).
pub fn baseline_additive(wave: &Waveform, seed: u64, sdr_db: f64) -> Result<(Waveform, f64)> {
    if !sdr_db.is_finite() {
        return Err(Error::Config(format!(
            "baseline needs a finite sdr target, got {sdr_db} dB"
        )));
    }
    let gain = audio::rms(wave)? * 10f64.powf(-sdr_db / 20.0);
    let pattern = baseline_pattern(wave.len(), seed);
    let samples = wave
        .samples
        .iter()
        .zip(&pattern)
        .map(|(s, p)| s + gain * p)
        .collect();
    let marked = Waveform::new(samples, wave.rate)?;
    let score = baseline_score(&marked, seed, sdr_db)?;
    Ok((marked, score))
}

/// Threshold rule for [`baseline_score`].
pub fn baseline_detected(score: f64) -> bool {
    score > BASELINE_THRESHOLD
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{margin_single, MarginMode};
    use crate::key::{derive_axis, AxisMethod, CalibrationStats, SecretKey};
    use crate::synth;

    fn tone(rate: u32, hz: f64, seconds: f64) -> Waveform {
        let n = (rate as f64 * seconds) as usize;
        let w = 2.0 * std::f64::consts::PI * hz / rate as f64;
        let samples = (0..n).map(|i| 0.3 * (w * i as f64).sin()).collect();
        Waveform::new(samples, rate).unwrap()
    }

    fn small_spec() -> CodecSpec {
        CodecSpec {
            family_id: "atk".into(),
            rate: 8_000,
            frame: 32,
            latent_dim: 16,
            codebook_size: 8,
            num_stages: 2,
            seed: 11,
        }
    }

    #[test]
    fn gaussian_matches_the_requested_snr_and_seed() {
        let clip = synth::pink_noise(24_000, 100_000.0 / 24_000.0, 31).unwrap();
        let noisy = attack_gaussian(&clip, 60.0, 7).unwrap();
        let noise: Vec<f64> = noisy
            .samples
            .iter()
            .zip(&clip.samples)
            .map(|(y, s)| y - s)
            .collect();
        let p_sig: f64 = clip.samples.iter().map(|s| s * s).sum();
        let p_noise: f64 = noise.iter().map(|e| e * e).sum();
        let measured = 10.0 * (p_sig / p_noise).log10();
        assert!(
            (measured - 60.0).abs() <= 0.5,
            "measured snr {measured} dB, wanted 60 +/- 0.5"
        );

        let again = attack_gaussian(&clip, 60.0, 7).unwrap();
        assert_eq!(noisy.samples, again.samples);
        let other = attack_gaussian(&clip, 60.0, 8).unwrap();
        assert_ne!(noisy.samples, other.samples);
    }

    #[test]
    fn gaussian_is_nearly_transparent_at_high_snr() {
        let clip = synth::pink_noise(24_000, 100_000.0 / 24_000.0, 32).unwrap();
        let noisy = attack_gaussian(&clip, 100.0, 3).unwrap();
        let fidelity = crate::audio::si_snr(&clip, &noisy).unwrap();
        assert!(fidelity >= 95.0, "si-snr {fidelity} dB below 95");
    }

    #[test]
    fn gaussian_rejects_silence_and_non_finite_snr() {
        let silence = Waveform::new(vec![0.0; 256], 8_000).unwrap();
        assert!(matches!(
            attack_gaussian(&silence, 60.0, 1),
            Err(Error::Degenerate(_))
        ));
        let clip = tone(8_000, 440.0, 0.1);
        assert!(matches!(
            attack_gaussian(&clip, f64::NAN, 1),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            attack_gaussian(&clip, f64::INFINITY, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn amplitude_scales_samples_exactly() {
        let wave = Waveform::new(vec![1.0, -1.0], 8_000).unwrap();
        let half = attack_amplitude(&wave, 0.5).unwrap();
        assert_eq!(half.samples, vec![0.5, -0.5]);

        let clip = tone(8_000, 200.0, 0.25);
        let same = attack_amplitude(&clip, 1.0).unwrap();
        assert_eq!(same.samples, clip.samples);

        let scaled = attack_amplitude(&clip, 0.37).unwrap();
        let lhs = audio::rms(&scaled).unwrap();
        let rhs = 0.37 * audio::rms(&clip).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);

        assert!(matches!(
            attack_amplitude(&clip, 0.0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            attack_amplitude(&clip, -2.0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            attack_amplitude(&clip, f64::NAN),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn lowpass_attenuates_the_stopband() {
        // 8 kHz is deep in the stopband of a 4 kHz cutoff at a 24 kHz rate.
        let deep = tone(24_000, 8_000.0, 1.0);
        let out = attack_lowpass(&deep, 4_000.0).unwrap();
        let ratio = audio::rms(&out).unwrap() / audio::rms(&deep).unwrap();
        assert!(ratio <= 1e-2, "stopband leak {ratio}");

        // The documented floor: >= 40 dB down at 1.25x the cutoff.
        let edge = tone(24_000, 5_000.0, 1.0);
        let out = attack_lowpass(&edge, 4_000.0).unwrap();
        let ratio = audio::rms(&out).unwrap() / audio::rms(&edge).unwrap();
        assert!(ratio <= 1e-2, "edge-of-stopband leak {ratio}");
    }

    #[test]
    fn lowpass_preserves_the_passband_and_dc() {
        let pass = tone(24_000, 1_000.0, 1.0);
        let out = attack_lowpass(&pass, 4_000.0).unwrap();
        let fidelity = audio::si_snr(&pass, &out).unwrap();
        assert!(fidelity >= 30.0, "passband si-snr {fidelity} dB");

        let dc = Waveform::new(vec![0.25; 2_000], 24_000).unwrap();
        let out = attack_lowpass(&dc, 4_000.0).unwrap();
        let worst = out
            .samples
            .iter()
            .map(|s| (s - 0.25).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-3, "dc deviation {worst}");
    }

    #[test]
    fn lowpass_is_near_identity_above_the_band() {
        // A cutoff at 0.46 of the rate is transparent for anything living
        // below it; band-limit broadband noise first so the probe does.
        let clip = synth::pink_noise(24_000, 1.0, 33).unwrap();
        let probe = attack_lowpass(&clip, 9_000.0).unwrap();
        let out = attack_lowpass(&probe, 0.46 * 24_000.0).unwrap();
        let fidelity = audio::si_snr(&probe, &out).unwrap();
        assert!(fidelity >= 40.0, "near-identity si-snr {fidelity} dB");
    }

    #[test]
    fn lowpass_rejects_cutoffs_outside_the_open_nyquist_interval() {
        let clip = tone(8_000, 440.0, 0.1);
        for bad in [0.0, -100.0, 4_000.0, 5_000.0, f64::NAN] {
            assert!(
                matches!(attack_lowpass(&clip, bad), Err(Error::Config(_))),
                "cutoff {bad} accepted"
            );
        }
    }

    #[test]
    fn resample_round_trip_preserves_length_and_tones() {
        let n = 12_345;
        let w = 2.0 * std::f64::consts::PI * 1_000.0 / 44_100.0;
        let clip = Waveform::new(
            (0..n).map(|i| 0.3 * (w * i as f64).sin()).collect(),
            44_100,
        )
        .unwrap();
        let out = attack_resample(&clip, 16_000).unwrap();
        assert_eq!(out.len(), clip.len());
        assert_eq!(out.rate, clip.rate);
        let fidelity = audio::si_snr(&clip, &out).unwrap();
        assert!(fidelity >= 30.0, "round-trip si-snr {fidelity} dB");

        // Same intermediate rate short-circuits to a copy.
        let same = attack_resample(&clip, 44_100).unwrap();
        assert_eq!(same.samples, clip.samples);
    }

    #[test]
    fn resample_discards_content_above_the_intermediate_nyquist() {
        let clip = tone(44_100, 10_000.0, 1.0);
        let out = attack_resample(&clip, 16_000).unwrap();
        let ratio = audio::rms(&out).unwrap() / audio::rms(&clip).unwrap();
        assert!(ratio <= 0.1, "supra-nyquist leak {ratio}");
    }

    #[test]
    fn resynthesis_attack_is_the_codec_round_trip() {
        let codec = make_codec(&small_spec()).unwrap();
        let clip = synth::corpus_clip(synth::Domain::MusicLike, 8_000, 0.5, 41).unwrap();
        let via_attack = attack_resynthesis(&clip, &codec).unwrap();
        let direct = codec.resynthesize(&clip).unwrap();
        assert_eq!(via_attack.samples, direct.samples);
        assert_eq!(via_attack.rate, direct.rate);
    }

    #[test]
    fn amplitude_attack_moves_margins_by_the_affine_law() {
        let codec = make_codec(&small_spec()).unwrap();
        let axis = derive_axis(&codec, AxisMethod::Cluster, 0).unwrap();
        let clip = synth::corpus_clip(synth::Domain::Ambient, 8_000, 0.5, 42).unwrap();
        let clean = crate::key::wave_projection(&codec, &axis, &clip, false).unwrap();
        // k = 0 keeps tau = mu exactly representable for arbitrary mu.
        let tau = clean + 0.125;
        let key = SecretKey {
            axis,
            stats: Some(CalibrationStats {
                mu: tau,
                sigma: 0.25,
                k: 0.0,
                tau,
                alpha: 1.0,
                n_null: 2,
            }),
            gamma: 1.5,
        };

        // Halving is exact in binary floating point, and the whole pipeline
        // from samples to margin is linear, so the prediction is bit-exact.
        let attacked = attack_amplitude(&clip, 0.5).unwrap();
        let got = margin_single(&attacked, &codec, &key, MarginMode::Sigma).unwrap();
        assert_eq!(got.raw_score, 0.5 * clean);
        assert_eq!(got.margin, (0.5 * clean - tau) / 0.25);
    }

    #[test]
    fn attack_specs_validate_their_parameters() {
        let bad = [
            AttackSpec::Gaussian {
                snr_db: f64::NAN,
                seed: 0,
            },
            AttackSpec::Amplitude { factor: 0.0 },
            AttackSpec::Amplitude { factor: -1.0 },
            AttackSpec::LowPass { cutoff_hz: 0.0 },
            AttackSpec::Resample { rate: 0 },
            AttackSpec::Resynthesis {
                codec: CodecSpec {
                    frame: 33,
                    ..small_spec()
                },
            },
        ];
        for spec in bad {
            assert!(spec.validate().is_err(), "{spec:?} accepted");
            assert!(spec.resolve().is_err(), "{spec:?} resolved");
        }
    }

    #[test]
    fn attack_specs_round_trip_through_toml_and_resolve() {
        let specs = [
            AttackSpec::Gaussian {
                snr_db: 60.0,
                seed: 7,
            },
            AttackSpec::Amplitude { factor: 0.5 },
            AttackSpec::LowPass { cutoff_hz: 4_000.0 },
            AttackSpec::Resample { rate: 16_000 },
            AttackSpec::Resynthesis {
                codec: small_spec(),
            },
        ];
        let clip = synth::corpus_clip(synth::Domain::SpeechLike, 24_000, 0.25, 43).unwrap();
        for spec in specs {
            let text = toml::to_string(&spec).unwrap();
            let back: AttackSpec = toml::from_str(&text).unwrap();
            assert_eq!(back, spec);

            let attack = spec.resolve().unwrap();
            assert_eq!(attack.label(), spec.label());
            let a = attack.apply(&clip).unwrap();
            let b = attack.apply(&clip).unwrap();
            assert_eq!(a.samples, b.samples, "{} not deterministic", spec.label());
        }
        assert_eq!(
            AttackSpec::Gaussian {
                snr_db: 60.0,
                seed: 7
            }
            .label(),
            "GAU60"
        );
        assert_eq!(AttackSpec::Amplitude { factor: 0.5 }.label(), "AMP0.5");
        assert_eq!(AttackSpec::LowPass { cutoff_hz: 4_000.0 }.label(), "LPF4000");
        assert_eq!(AttackSpec::Resample { rate: 16_000 }.label(), "RSM16000");
    }

    #[test]
    fn baseline_mark_is_detected_on_clean_audio() {
        let clip = synth::corpus_clip(synth::Domain::MusicLike, 24_000, 2.0, 44).unwrap();
        let (marked, score) = baseline_additive(&clip, 99, BASELINE_SDR_DB).unwrap();
        assert!(score >= 0.9, "self-correlation {score}");
        assert!(baseline_detected(score));
        assert_eq!(marked.len(), clip.len());

        // Unmarked audio stays far under the threshold.
        let null = baseline_score(&clip, 99, BASELINE_SDR_DB).unwrap();
        assert!(null.abs() < BASELINE_THRESHOLD, "null score {null}");

        let (again, score_again) = baseline_additive(&clip, 99, BASELINE_SDR_DB).unwrap();
        assert_eq!(again.samples, marked.samples);
        assert_eq!(score_again, score);
    }

    #[test]
    fn baseline_score_is_amplitude_invariant() {
        let clip = synth::corpus_clip(synth::Domain::Ambient, 24_000, 2.0, 45).unwrap();
        let (marked, score) = baseline_additive(&clip, 5, BASELINE_SDR_DB).unwrap();
        for factor in [0.5, 2.0] {
            let attacked = attack_amplitude(&marked, factor).unwrap();
            let after = baseline_score(&attacked, 5, BASELINE_SDR_DB).unwrap();
            assert!(
                (after - score).abs() < 1e-9,
                "factor {factor}: {after} vs {score}"
            );
            assert!(baseline_detected(after));
        }
    }

    #[test]
    fn baseline_on_silence_scores_zero() {
        let silence = Waveform::new(vec![0.0; 1_000], 24_000).unwrap();
        let (marked, score) = baseline_additive(&silence, 1, BASELINE_SDR_DB).unwrap();
        assert_eq!(marked.samples, silence.samples);
        assert_eq!(score, 0.0);
        assert!(!baseline_detected(score));
    }
}

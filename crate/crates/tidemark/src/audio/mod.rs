//! Mono waveform container, WAV I/O, sample-rate conversion, and the small
//! set of signal metrics everything else is built on.

mod resample;
mod wav;

pub(crate) use resample::bessel_i0;
pub use resample::{resample, Resampler};
pub use wav::{load_wav, parse_wav, save_wav, wav_bytes};

use crate::{Error, Result};

/// Mono audio buffer. Samples are `f64` end to end; file boundaries clip to
/// [-1, 1], in-memory values may exceed that transiently (e.g. mid-attack).
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, rate: u32) -> Result<Self> {
        if rate == 0 {
            return Err(Error::Config("sample rate must be nonzero".into()));
        }
        Ok(Self { samples, rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds.
    pub fn seconds(&self) -> f64 {
        self.samples.len() as f64 / self.rate as f64
    }
}

/// Which quantity a [`SignalMetric`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Rms,
    SiSnrDb,
    SnrDb,
}

/// A measured scalar tagged with what it measures, used in reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalMetric {
    pub kind: MetricKind,
    pub value: f64,
}

/// Root-mean-square amplitude.
pub fn rms(wave: &Waveform) -> Result<f64> {
    if wave.is_empty() {
        return Err(Error::Empty("rms of empty waveform"));
    }
    let sum: f64 = wave.samples.iter().map(|s| s * s).sum();
    Ok((sum / wave.len() as f64).sqrt())
}

/// Scale-invariant signal-to-noise ratio in dB, capped to [-100, 100].
///
/// The estimate is projected onto the reference; the result is the energy
/// ratio of that projection to the residual. Equal length and rate required.
pub fn si_snr(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    if reference.rate != estimate.rate {
        return Err(Error::Rate {
            expected: reference.rate,
            got: estimate.rate,
        });
    }
    if reference.len() != estimate.len() {
        return Err(Error::Shape(format!(
            "si-snr needs equal lengths, got {} and {}",
            reference.len(),
            estimate.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::Empty("si-snr of empty waveforms"));
    }
    let ref_energy: f64 = reference.samples.iter().map(|s| s * s).sum();
    if ref_energy == 0.0 {
        return Err(Error::Degenerate("si-snr reference has zero energy".into()));
    }
    let dot: f64 = reference
        .samples
        .iter()
        .zip(&estimate.samples)
        .map(|(r, e)| r * e)
        .sum();
    let scale = dot / ref_energy;
    let mut target_energy = 0.0;
    let mut residual_energy = 0.0;
    for (r, e) in reference.samples.iter().zip(&estimate.samples) {
        let t = scale * r;
        target_energy += t * t;
        let d = e - t;
        residual_energy += d * d;
    }
    if target_energy == 0.0 {
        return Ok(-100.0);
    }
    if residual_energy == 0.0 {
        return Ok(100.0);
    }
    Ok((10.0 * (target_energy / residual_energy).log10()).clamp(-100.0, 100.0))
}

/// Zero-pad the tail so the length is the smallest multiple of `block` that
/// is >= the input length. Already-aligned input is returned unchanged.
pub fn pad_to_multiple(wave: &Waveform, block: usize) -> Result<Waveform> {
    if block == 0 {
        return Err(Error::Config("pad block must be nonzero".into()));
    }
    let rem = wave.len() % block;
    if rem == 0 && !wave.is_empty() {
        return Ok(wave.clone());
    }
    let target = if wave.is_empty() {
        block
    } else {
        wave.len() + (block - rem)
    };
    let mut samples = wave.samples.clone();
    samples.resize(target, 0.0);
    Ok(Waveform {
        samples,
        rate: wave.rate,
    })
}

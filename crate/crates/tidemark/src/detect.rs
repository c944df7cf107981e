//! Watermark detection: calibrated margins per codec and the median
//! ensemble rule.
//!
//! Detection is the calibrated counterpart of embedding. A suspect clip is
//! resampled to the codec's rate, encoded, and projected onto the secret
//! axis; the margin is the distance of that projection above the frozen
//! threshold, normalized either by the null spread (`sigma`) or by the mean
//! clean-audio hinge gap (`alpha`). Ensembles take the lower median of the
//! per-codec alpha margins, which tolerates a minority of broken codecs in
//! either direction.

use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::codec::SurrogateCodec;
use crate::error::{Error, Result};
use crate::key::{wave_projection, SecretKey};

/// Which calibrated denominator normalizes a margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginMode {
    /// Null standard deviation; the default for single-codec verdicts.
    Sigma,
    /// Mean clean-audio hinge gap; mandatory inside ensembles so margins
    /// from different codecs are commensurable.
    Alpha,
}

/// Which latents the detector projects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentView {
    /// Straight off the analysis, before residual quantization. The default:
    /// the embedding shift lives here, and an attacker's quantizer has
    /// already acted inside resynthesis.
    PreQuant,
    /// After residual quantization, for comparison experiments.
    Quantized,
}

/// Verdict of one codec against one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// The projection score of the suspect clip.
    pub raw_score: f64,
    /// Normalized distance above the threshold.
    pub margin: f64,
    /// Exactly `margin > 0`.
    pub detected: bool,
    /// Identity of the codec the margin was measured through.
    pub codec_id: String,
}

/// Verdict of a committee against one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    /// Per-codec results in committee order.
    pub per_codec: Vec<DetectionResult>,
    /// The lower-median alpha margin.
    pub score: f64,
    /// Exactly `score > 0`.
    pub detected: bool,
}

fn calibrated<'a>(
    codec: &SurrogateCodec,
    key: &'a SecretKey,
) -> Result<&'a crate::key::CalibrationStats> {
    key.validate()?;
    let id = codec.spec().identity();
    if key.axis.codec_id != id {
        return Err(Error::Config(format!(
            "key is bound to {}, not to {id}",
            key.axis.codec_id
        )));
    }
    key.stats
        .as_ref()
        .ok_or_else(|| Error::Config(format!("key for {id} is not calibrated")))
}

/// Margin of one clip against one codec, in the chosen latent view.
pub fn margin_single_with(
    wave: &Waveform,
    codec: &SurrogateCodec,
    key: &SecretKey,
    mode: MarginMode,
    view: LatentView,
) -> Result<DetectionResult> {
    let stats = calibrated(codec, key)?;
    let raw_score = wave_projection(codec, &key.axis, wave, view == LatentView::Quantized)?;
    let denom = match mode {
        MarginMode::Sigma => stats.sigma,
        MarginMode::Alpha => stats.alpha,
    };
    let margin = (raw_score - stats.tau) / denom;
    Ok(DetectionResult {
        raw_score,
        margin,
        detected: margin > 0.0,
        codec_id: codec.spec().identity(),
    })
}

/// Margin of one clip against one codec on pre-quantization latents.
pub fn margin_single(
    wave: &Waveform,
    codec: &SurrogateCodec,
    key: &SecretKey,
    mode: MarginMode,
) -> Result<DetectionResult> {
    margin_single_with(wave, codec, key, mode, LatentView::PreQuant)
}

/// The lower median: the ceil(n/2)-th smallest value, 1-indexed.
///
/// For odd `n` this is the true median; for even `n` it is the lower of the
/// two central values, which errs toward "not detected".
pub fn median_rule(margins: &[f64]) -> Result<f64> {
    if margins.is_empty() {
        return Err(Error::Empty("margin list"));
    }
    if let Some(pos) = margins.iter().position(|m| !m.is_finite()) {
        return Err(Error::NonFinite {
            what: "margins",
            step: pos,
        });
    }
    let mut sorted = margins.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[margins.len().div_ceil(2) - 1])
}

/// Committee verdict: alpha margins per codec, combined by [`median_rule`].
pub fn score_ensemble_with(
    wave: &Waveform,
    committee: &[(&SurrogateCodec, &SecretKey)],
    view: LatentView,
) -> Result<EnsembleResult> {
    if committee.is_empty() {
        return Err(Error::Config("committee must not be empty".into()));
    }
    let per_codec = committee
        .iter()
        .map(|&(codec, key)| margin_single_with(wave, codec, key, MarginMode::Alpha, view))
        .collect::<Result<Vec<_>>>()?;
    let margins: Vec<f64> = per_codec.iter().map(|r| r.margin).collect();
    let score = median_rule(&margins)?;
    Ok(EnsembleResult {
        per_codec,
        score,
        detected: score > 0.0,
    })
}

/// Committee verdict on pre-quantization latents.
pub fn score_ensemble(
    wave: &Waveform,
    committee: &[(&SurrogateCodec, &SecretKey)],
) -> Result<EnsembleResult> {
    score_ensemble_with(wave, committee, LatentView::PreQuant)
}

/// Transfer metric: how much an attacker's resynthesis shifts the committee
/// score of the watermarked clip relative to its clean baseline.
///
/// Both clips pass through the attacker codec, so codec coloration cancels
/// and a positive difference isolates the surviving directional bias.
pub fn delta_score(
    watermarked: &Waveform,
    clean: &Waveform,
    attacker: &SurrogateCodec,
    committee: &[(&SurrogateCodec, &SecretKey)],
) -> Result<f64> {
    if watermarked.rate != clean.rate {
        return Err(Error::Rate {
            expected: clean.rate,
            got: watermarked.rate,
        });
    }
    if watermarked.len() != clean.len() {
        return Err(Error::Shape(format!(
            "clip lengths differ: {} vs {}",
            watermarked.len(),
            clean.len()
        )));
    }
    let attacked_wm = attacker.resynthesize(watermarked)?;
    let attacked_clean = attacker.resynthesize(clean)?;
    let wm = score_ensemble(&attacked_wm, committee)?;
    let base = score_ensemble(&attacked_clean, committee)?;
    Ok(wm.score - base.score)
}

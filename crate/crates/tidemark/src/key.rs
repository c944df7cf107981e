//! Secret keys: axis derivation, projection scoring, calibration, and key
//! files.
//!
//! The secret side of the scheme is a unit vector in a codec's latent space.
//! A clip's score is the temporal mean of its latent frames projected onto
//! that axis; unmarked audio scores near zero, embedded audio is pushed
//! upward along the axis. Calibration freezes the null statistics of the
//! score on a corpus of unmarked clips so detection can report a normalized
//! margin against a threshold instead of a raw projection.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::{resample, Waveform};
use crate::cluster::{self, Init};
use crate::codec::{LatentSequence, SurrogateCodec};
use crate::error::{Error, Result};

/// Floor for the null standard deviation, keeping margins finite.
pub const SIGMA_FLOOR: f64 = 1e-8;
/// Floor for the hinge normalization scale.
pub const ALPHA_FLOOR: f64 = 1e-8;
/// Tolerance on the unit norm of a stored axis.
pub const UNIT_NORM_TOL: f64 = 1e-9;
/// Key file format version written by [`save_key`].
pub const KEY_FORMAT: u32 = 1;
/// Lloyd rounds for the two-way codebook split.
const CLUSTER_ITERS: usize = 100;
/// Power-iteration rounds for the principal-component axis.
const PCA_ITERS: usize = 300;
/// Fixed start seed for the power iteration, part of the sign determinism.
const PCA_SEED: u64 = 0x7063_6131;

/// How a secret axis is derived from a codec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisMethod {
    /// Direction between the two k-means centroids of the codebook rows.
    Cluster,
    /// First principal component of the centered codebook rows.
    Pca,
    /// Seeded random unit vector, independent of the codebook.
    Random,
}

/// A unit direction in latent space, bound to one concrete codec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecretAxis {
    pub method: AxisMethod,
    /// Identity string of the codec the axis was derived for; see
    /// [`crate::codec::CodecSpec::identity`].
    pub codec_id: String,
    /// Generator seed, present only for `Random` axes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// The axis itself, unit norm within [`UNIT_NORM_TOL`].
    pub v: Vec<f64>,
}

impl SecretAxis {
    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.v.is_empty() {
            return Err(Error::Empty("axis vector"));
        }
        if let Some(pos) = self.v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "axis vector",
                step: pos,
            });
        }
        let norm = self.v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::Format(format!(
                "axis norm {norm} is not 1 within {UNIT_NORM_TOL:e}"
            )));
        }
        if self.method == AxisMethod::Random && self.seed.is_none() {
            return Err(Error::Format("random axis is missing its seed".into()));
        }
        Ok(())
    }
}

/// Null-score statistics frozen by [`calibrate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStats {
    /// Mean null projection.
    pub mu: f64,
    /// Population standard deviation of the null projections, floored at
    /// [`SIGMA_FLOOR`].
    pub sigma: f64,
    /// Threshold multiplier the stats were built with.
    pub k: f64,
    /// Detection threshold, exactly `mu + k * sigma` as stored.
    pub tau: f64,
    /// Mean hinge gap `ReLU(tau - score)` over the null corpus, floored at
    /// [`ALPHA_FLOOR`]; normalizes the joint embedding loss.
    pub alpha: f64,
    /// Number of clips the statistics were estimated from.
    pub n_null: usize,
}

impl CalibrationStats {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [
            ("mu", self.mu),
            ("sigma", self.sigma),
            ("k", self.k),
            ("tau", self.tau),
            ("alpha", self.alpha),
        ] {
            if !x.is_finite() {
                return Err(Error::Format(format!("calibration field {name} is {x}")));
            }
        }
        if self.sigma < SIGMA_FLOOR {
            return Err(Error::Format(format!(
                "sigma {} is below the floor {SIGMA_FLOOR:e}",
                self.sigma
            )));
        }
        if self.alpha < ALPHA_FLOOR {
            return Err(Error::Format(format!(
                "alpha {} is below the floor {ALPHA_FLOOR:e}",
                self.alpha
            )));
        }
        if self.n_null < 2 {
            return Err(Error::Format(format!(
                "calibration needs at least 2 clips, recorded {}",
                self.n_null
            )));
        }
        // Stored redundantly, so the identity must hold bit for bit.
        if self.tau != self.mu + self.k * self.sigma {
            return Err(Error::Format(format!(
                "tau {} does not equal mu + k*sigma = {}",
                self.tau,
                self.mu + self.k * self.sigma
            )));
        }
        Ok(())
    }
}

/// A secret axis plus its embedding target and, once calibrated, the frozen
/// null statistics detection runs against.
#[derive(Debug, Clone, PartialEq)]
pub struct SecretKey {
    pub axis: SecretAxis,
    /// Absent until [`calibrate`] has been run for the bound codec.
    pub stats: Option<CalibrationStats>,
    /// Target alignment score the embedder optimizes toward.
    pub gamma: f64,
}

impl SecretKey {
    pub fn validate(&self) -> Result<()> {
        self.axis.validate()?;
        if let Some(stats) = &self.stats {
            stats.validate()?;
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Format(format!(
                "gamma must be positive and finite, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Shape-check a row-major codebook and return its row count.
fn codebook_rows(codebook: &[f64], dim: usize) -> Result<usize> {
    if dim == 0 {
        return Err(Error::Config("axis dimension must be positive".into()));
    }
    if codebook.is_empty() {
        return Err(Error::Empty("codebook"));
    }
    if codebook.len() % dim != 0 {
        return Err(Error::Shape(format!(
            "codebook length {} is not a multiple of dimension {dim}",
            codebook.len()
        )));
    }
    if let Some(pos) = codebook.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            what: "codebook",
            step: pos,
        });
    }
    let rows = codebook.len() / dim;
    if rows < 2 {
        return Err(Error::Config(
            "axis derivation needs at least 2 codebook rows".into(),
        ));
    }
    Ok(rows)
}

/// Deterministic sign convention shared by every axis method: the first
/// component whose magnitude is non-negligible is made positive.
fn fix_sign_first_nonzero(v: &mut [f64]) {
    for i in 0..v.len() {
        if v[i].abs() > 1e-12 {
            if v[i] < 0.0 {
                for x in v.iter_mut() {
                    *x = -*x;
                }
            }
            return;
        }
    }
}

/// Normalize in place; degenerate when the norm is zero or non-finite.
fn into_unit(mut v: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm <= 0.0 {
        return Err(Error::Degenerate(format!("{what} has no direction")));
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    fix_sign_first_nonzero(&mut v);
    Ok(v)
}

/// Axis between the two k-means centroids of the codebook rows.
///
/// The split starts from the two rows at maximal pairwise distance and runs
/// Lloyd rounds to convergence, so the result is deterministic and invariant
/// under row permutation (up to the shared sign convention).
pub fn derive_axis_cluster(codebook: &[f64], dim: usize, codec_id: &str) -> Result<SecretAxis> {
    let rows = codebook_rows(codebook, dim)?;
    let mut best = (0usize, 1usize);
    let mut best_d = f64::NEG_INFINITY;
    for i in 0..rows {
        let a = &codebook[i * dim..(i + 1) * dim];
        for j in i + 1..rows {
            let b = &codebook[j * dim..(j + 1) * dim];
            let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            if d > best_d {
                best_d = d;
                best = (i, j);
            }
        }
    }
    if best_d <= 0.0 {
        return Err(Error::Degenerate(
            "all codebook rows are identical".into(),
        ));
    }
    let mut seeds = Vec::with_capacity(2 * dim);
    seeds.extend_from_slice(&codebook[best.0 * dim..(best.0 + 1) * dim]);
    seeds.extend_from_slice(&codebook[best.1 * dim..(best.1 + 1) * dim]);
    let fit = cluster::kmeans(
        codebook,
        dim,
        2,
        CLUSTER_ITERS,
        Init::Explicit { centroids: seeds },
    )?;
    let (c0, c1) = fit.centroids.split_at(dim);
    let diff: Vec<f64> = c1.iter().zip(c0).map(|(a, b)| a - b).collect();
    let v = into_unit(diff, "between-centroid direction")?;
    Ok(SecretAxis {
        method: AxisMethod::Cluster,
        codec_id: codec_id.to_owned(),
        seed: None,
        v,
    })
}

/// Axis along the first principal component of the centered codebook rows.
pub fn derive_axis_pca(codebook: &[f64], dim: usize, codec_id: &str) -> Result<SecretAxis> {
    codebook_rows(codebook, dim)?;
    let mut v = cluster::principal_axis(codebook, dim, PCA_ITERS, PCA_SEED)?;
    fix_sign_first_nonzero(&mut v);
    Ok(SecretAxis {
        method: AxisMethod::Pca,
        codec_id: codec_id.to_owned(),
        seed: None,
        v,
    })
}

/// Seeded random unit axis, the codebook-agnostic control variant.
pub fn derive_axis_random(dim: usize, seed: u64, codec_id: &str) -> Result<SecretAxis> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    if dim == 0 {
        return Err(Error::Config("axis dimension must be positive".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let v = into_unit(raw, "random direction")?;
    Ok(SecretAxis {
        method: AxisMethod::Random,
        codec_id: codec_id.to_owned(),
        seed: Some(seed),
        v,
    })
}

/// Derive an axis for `codec` from one of its codebook stages.
///
/// Stage 0 is the conventional choice: it quantizes the raw latents, so it
/// carries the dominant structure the later residual stages refine. `seed`
/// only matters for [`AxisMethod::Random`].
pub fn derive_axis_for_stage(
    codec: &SurrogateCodec,
    method: AxisMethod,
    stage: usize,
    seed: u64,
) -> Result<SecretAxis> {
    let spec = codec.spec();
    if stage >= spec.num_stages {
        return Err(Error::Config(format!(
            "stage {stage} out of range, codec has {}",
            spec.num_stages
        )));
    }
    let id = spec.identity();
    match method {
        AxisMethod::Cluster => derive_axis_cluster(codec.codebook(stage), spec.latent_dim, &id),
        AxisMethod::Pca => derive_axis_pca(codec.codebook(stage), spec.latent_dim, &id),
        AxisMethod::Random => derive_axis_random(spec.latent_dim, seed, &id),
    }
}

/// Derive an axis from the coarsest (stage-0) codebook.
pub fn derive_axis(codec: &SurrogateCodec, method: AxisMethod, seed: u64) -> Result<SecretAxis> {
    derive_axis_for_stage(codec, method, 0, seed)
}

/// Temporal mean of the latent frames' inner products with the axis.
pub fn projection_score(latent: &LatentSequence, axis: &SecretAxis) -> Result<f64> {
    if latent.dim != axis.dim() {
        return Err(Error::Shape(format!(
            "latent dimension {} does not match axis dimension {}",
            latent.dim,
            axis.dim()
        )));
    }
    let frames = latent.num_frames();
    let mut sum = 0.0;
    for t in 0..frames {
        sum += latent
            .frame(t)
            .iter()
            .zip(&axis.v)
            .map(|(z, v)| z * v)
            .sum::<f64>();
    }
    Ok(sum / frames as f64)
}

/// Project one waveform through the codec's analysis, resampling to the
/// codec rate when needed.
///
/// `quantized` selects the post-RVQ latents; calibration and detection both
/// default to the pre-quantization view, where the embedding shift lives.
pub(crate) fn wave_projection(
    codec: &SurrogateCodec,
    axis: &SecretAxis,
    wave: &Waveform,
    quantized: bool,
) -> Result<f64> {
    let native;
    let at_rate = if wave.rate == codec.spec().rate {
        wave
    } else {
        native = resample(wave, codec.spec().rate)?;
        &native
    };
    let z = codec.encode(at_rate)?;
    if quantized {
        let (q, _) = codec.quantize(&z)?;
        projection_score(&q, axis)
    } else {
        projection_score(&z, axis)
    }
}

/// Turn a list of null scores into frozen statistics.
///
/// `sigma` is the population standard deviation floored at [`SIGMA_FLOOR`],
/// `tau = mu + k * sigma` with the floored sigma, and `alpha` is the mean
/// hinge gap below `tau`, floored at [`ALPHA_FLOOR`].
pub fn calibration_from_scores(scores: &[f64], k: f64) -> Result<CalibrationStats> {
    if scores.len() < 2 {
        return Err(Error::Config(format!(
            "calibration needs at least 2 null scores, got {}",
            scores.len()
        )));
    }
    if !k.is_finite() {
        return Err(Error::Config(format!("threshold multiplier k is {k}")));
    }
    if let Some(pos) = scores.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            what: "null scores",
            step: pos,
        });
    }
    let n = scores.len() as f64;
    let mu = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mu) * (s - mu)).sum::<f64>() / n;
    let sigma = var.sqrt().max(SIGMA_FLOOR);
    let tau = mu + k * sigma;
    let gap = scores.iter().map(|s| (tau - s).max(0.0)).sum::<f64>() / n;
    let alpha = gap.max(ALPHA_FLOOR);
    Ok(CalibrationStats {
        mu,
        sigma,
        k,
        tau,
        alpha,
        n_null: scores.len(),
    })
}

/// Estimate the axis's null statistics over a corpus of unmarked clips.
///
/// Each clip is scored exactly the way detection scores it, so the frozen
/// threshold and the live margin share one code path.
pub fn calibrate(
    codec: &SurrogateCodec,
    axis: &SecretAxis,
    null_corpus: &[Waveform],
    k: f64,
) -> Result<CalibrationStats> {
    if null_corpus.len() < 2 {
        return Err(Error::Config(format!(
            "null corpus needs at least 2 clips, got {}",
            null_corpus.len()
        )));
    }
    let mut scores = Vec::with_capacity(null_corpus.len());
    for clip in null_corpus {
        scores.push(wave_projection(codec, axis, clip, false)?);
    }
    calibration_from_scores(&scores, k)
}

/// On-disk form: version first, then the key fields.
#[derive(Serialize, Deserialize)]
struct KeyFile {
    format: u32,
    gamma: f64,
    axis: SecretAxis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stats: Option<CalibrationStats>,
}

/// Write a key as versioned structured text.
pub fn save_key(key: &SecretKey, path: impl AsRef<Path>) -> Result<()> {
    key.validate()?;
    let file = KeyFile {
        format: KEY_FORMAT,
        gamma: key.gamma,
        axis: key.axis.clone(),
        stats: key.stats,
    };
    let text = toml::to_string_pretty(&file)
        .map_err(|e| Error::Format(format!("key serialization failed: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Read a key back, checking the version and every stored invariant.
pub fn load_key(path: impl AsRef<Path>) -> Result<SecretKey> {
    let text = std::fs::read_to_string(path)?;
    let file: KeyFile =
        toml::from_str(&text).map_err(|e| Error::Format(format!("bad key file: {e}")))?;
    if file.format != KEY_FORMAT {
        return Err(Error::Format(format!(
            "unsupported key format version {}, expected {KEY_FORMAT}",
            file.format
        )));
    }
    let key = SecretKey {
        axis: file.axis,
        stats: file.stats,
        gamma: file.gamma,
    };
    key.validate()?;
    Ok(key)
}

//! Deterministic surrogate codecs: lapped orthonormal analysis, residual
//! vector quantization, and transpose synthesis.
//!
//! Each codec is a pure function of its spec. The analysis matrix is a seeded
//! random rotation (QR-orthonormalized Gaussian) composed with a sine-windowed
//! alias-cancelling cosine base, so at `latent_dim = frame/2` the framed
//! transform is orthogonal as a whole: decode inverts encode exactly on the
//! interior, and re-encoding a decoded latent sequence returns it unchanged.
//! That last property is what makes quantizer tokens a stable fingerprint of
//! a clip instead of an overlap-add artifact, mirroring how strided neural
//! codecs behave. Codebooks are fitted by k-means on the latents of a long
//! pink-noise conditioning signal, stage by stage on the residuals the
//! earlier stages leave behind. The encoder is linear, so its vector-Jacobian
//! product is exact and cheap, which is what the embedding optimizer leans on.
//!
//! Codecs with the same `family_id` share a base rotation draw; the per-codec
//! seed adds a small re-orthonormalized perturbation. Members of a family are
//! therefore "architecturally close" while distinct families are independent.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::Waveform;
use crate::cluster::{self, Init};
use crate::error::{Error, Result};
use crate::synth;

/// Relative Frobenius size of the within-family perturbation.
const FAMILY_PERTURBATION: f64 = 0.05;

/// Length of the pink-noise conditioning signal used to fit codebooks.
const FIT_SECONDS: f64 = 60.0;

/// RMS the conditioning signal is normalised to before encoding.
const FIT_RMS: f64 = 0.1;

/// k-means rounds per residual stage.
const FIT_KMEANS_ITERS: usize = 25;

/// Cap on the number of latent frames handed to k-means; the conditioning
/// signal is strided down to roughly this many frames.
const FIT_FRAMES: usize = 4096;

/// Hard caps applied when reading codec files, before any allocation.
const MAX_FAMILY_BYTES: usize = 256;
const MAX_FRAME: usize = 1 << 16;
const MAX_CODEBOOK: usize = 1 << 16;
const MAX_STAGES: usize = 64;
const MAX_ELEMENTS: usize = 1 << 24;

/// File magic for codec persistence, version baked into the last byte.
const CODEC_MAGIC: &[u8; 4] = b"TMC1";

/// Construction parameters for a surrogate codec.
///
/// The analysis hop is fixed at `frame / 2`, which is what the synthesis
/// window's overlap condition assumes.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CodecSpec {
    /// Family label; codecs sharing it get nearby analysis matrices.
    pub family_id: String,
    /// Native sample rate in Hz.
    pub rate: u32,
    /// Analysis frame length in samples; a power of two.
    pub frame: usize,
    /// Latent dimension d; at most `frame/2`. At exactly `frame/2` the
    /// analysis is invertible and resynthesis fidelity is limited only by
    /// quantization.
    pub latent_dim: usize,
    /// Codebook entries per residual stage.
    pub codebook_size: usize,
    /// Number of residual quantization stages.
    pub num_stages: usize,
    /// Seed for the per-codec perturbation and the codebook fit.
    pub seed: u64,
}

impl Default for CodecSpec {
    fn default() -> Self {
        CodecSpec {
            family_id: "default".into(),
            rate: 24_000,
            frame: 128,
            latent_dim: 64,
            codebook_size: 64,
            num_stages: 4,
            seed: 17,
        }
    }
}

impl CodecSpec {
    /// Analysis hop in samples, fixed at half a frame.
    pub fn hop(&self) -> usize {
        self.frame / 2
    }

    /// Canonical identity string for binding keys to one concrete codec.
    ///
    /// Two specs share an identity exactly when they build bit-identical
    /// codecs, so a key carrying this string is usable only with the member
    /// it was derived from.
    pub fn identity(&self) -> String {
        format!(
            "{}@{}hz/f{}d{}/K{}n{}/s{}",
            self.family_id,
            self.rate,
            self.frame,
            self.latent_dim,
            self.codebook_size,
            self.num_stages,
            self.seed
        )
    }

    /// Check every structural invariant of the spec.
    pub fn validate(&self) -> Result<()> {
        if self.family_id.is_empty() {
            return Err(Error::Config("family_id must be non-empty".into()));
        }
        if self.family_id.len() > MAX_FAMILY_BYTES {
            return Err(Error::Config("family_id too long".into()));
        }
        if self.rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if !self.frame.is_power_of_two() || self.frame < 2 || self.frame > MAX_FRAME {
            return Err(Error::Config(format!(
                "frame must be a power of two in [2, {MAX_FRAME}], got {}",
                self.frame
            )));
        }
        if self.latent_dim == 0 || self.latent_dim > self.frame / 2 {
            return Err(Error::Config(format!(
                "latent_dim must be in [1, frame/2={}], got {}",
                self.frame / 2,
                self.latent_dim
            )));
        }
        if self.codebook_size < 2 || self.codebook_size > MAX_CODEBOOK {
            return Err(Error::Config(format!(
                "codebook_size must be in [2, {MAX_CODEBOOK}], got {}",
                self.codebook_size
            )));
        }
        if self.num_stages == 0 || self.num_stages > MAX_STAGES {
            return Err(Error::Config(format!(
                "num_stages must be in [1, {MAX_STAGES}], got {}",
                self.num_stages
            )));
        }
        let elements = self
            .latent_dim
            .checked_mul(self.frame)
            .and_then(|a| {
                self.num_stages
                    .checked_mul(self.codebook_size)?
                    .checked_mul(self.latent_dim)?
                    .checked_add(a)
            })
            .ok_or_else(|| Error::Config("spec dimensions overflow".into()))?;
        if elements > MAX_ELEMENTS {
            return Err(Error::Config(format!(
                "spec describes {elements} matrix elements, cap is {MAX_ELEMENTS}"
            )));
        }
        Ok(())
    }
}

/// A d-by-L latent matrix, one column per analysis frame.
///
/// Stored frame-major: frame `t` occupies `data[t*dim .. (t+1)*dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence {
    pub data: Vec<f64>,
    pub dim: usize,
    /// Rate of the waveform the latents were computed from.
    pub source_rate: u32,
}

impl LatentSequence {
    pub fn new(data: Vec<f64>, dim: usize, source_rate: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("latent dimension must be positive".into()));
        }
        if data.is_empty() {
            return Err(Error::Empty("latent sequence"));
        }
        if data.len() % dim != 0 {
            return Err(Error::Shape(format!(
                "latent data length {} not a multiple of dim {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "latent sequence",
                step: pos,
            });
        }
        Ok(LatentSequence {
            data,
            dim,
            source_rate,
        })
    }

    /// Number of frames L.
    pub fn num_frames(&self) -> usize {
        self.data.len() / self.dim
    }

    /// One latent column.
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }
}

/// Per-frame codebook indices, one row of `stages` entries per frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    /// Frame-major: frame `t` occupies `indices[t*stages .. (t+1)*stages]`.
    pub indices: Vec<u32>,
    pub stages: usize,
}

impl TokenSequence {
    /// Number of frames L.
    pub fn num_frames(&self) -> usize {
        self.indices.len() / self.stages
    }

    /// The stage indices chosen for frame `t`.
    pub fn frame_tokens(&self, t: usize) -> &[u32] {
        &self.indices[t * self.stages..(t + 1) * self.stages]
    }
}

/// An encode-quantize-decode codec with exact linear-algebra internals.
#[derive(Debug, Clone)]
pub struct SurrogateCodec {
    spec: CodecSpec,
    /// Row-major `latent_dim x frame`; rows orthonormal, with the analysis
    /// window folded in (applying a row to a raw frame IS the windowed
    /// analysis). The synthesis operator is its transpose and is never
    /// materialised.
    analysis: Vec<f64>,
    /// The window embedded in the analysis rows: sqrt-Hann with half-sample
    /// offsets, length `frame`. Kept for inspection and invariant checks.
    window: Vec<f64>,
    /// One row-major `codebook_size x latent_dim` matrix per stage.
    codebooks: Vec<Vec<f64>>,
}

fn fnv1a(text: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in text.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derive an independent stream seed from a base seed and a tag.
fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TAG_FAMILY: u64 = 1;
const TAG_MEMBER: u64 = 2;
const TAG_PINK: u64 = 3;
const TAG_STAGE: u64 = 4;

fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rows * cols)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect()
}

/// Orthonormalize the rows of a row-major matrix in place.
///
/// Modified Gram-Schmidt with one re-orthogonalization pass; plenty for the
/// 1e-10 Gram-matrix tolerance at the sizes codecs use.
fn orthonormalize_rows(mat: &mut [f64], rows: usize, cols: usize) -> Result<()> {
    for r in 0..rows {
        let (head, tail) = mat.split_at_mut(r * cols);
        let row = &mut tail[..cols];
        for _ in 0..2 {
            for p in 0..r {
                let prev = &head[p * cols..(p + 1) * cols];
                let dot: f64 = row.iter().zip(prev).map(|(a, b)| a * b).sum();
                for (x, y) in row.iter_mut().zip(prev) {
                    *x -= dot * y;
                }
            }
        }
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::Degenerate(format!(
                "analysis draw is rank deficient at row {r}"
            )));
        }
        for x in row.iter_mut() {
            *x /= norm;
        }
    }
    Ok(())
}

fn sine_window(frame: usize) -> Vec<f64> {
    // sqrt of a Hann with half-sample offsets: w[n]^2 + w[n+frame/2]^2 = 1
    // exactly (the overlap-add condition at hop frame/2), and the offset is
    // the symmetry the alias-cancelling base below requires.
    (0..frame)
        .map(|n| (std::f64::consts::PI * (n as f64 + 0.5) / frame as f64).sin())
        .collect()
}

/// Sine-windowed cosine base with time-domain alias cancellation: `frame/2`
/// orthonormal rows of length `frame` whose shifts by `frame/2` are mutually
/// orthogonal. Framed at hop `frame/2` they form an orthonormal basis of the
/// signal space (away from the edges), which is what makes the framed
/// transform invertible from `frame/2` coefficients per hop.
fn tdac_base(frame: usize, window: &[f64]) -> Vec<f64> {
    let half = frame / 2;
    let scale = (2.0 / half as f64).sqrt();
    let mut base = vec![0.0f64; half * frame];
    for k in 0..half {
        for n in 0..frame {
            let arg = std::f64::consts::PI / half as f64
                * (n as f64 + 0.5 + half as f64 / 2.0)
                * (k as f64 + 0.5);
            base[k * frame + n] = window[n] * scale * arg.cos();
        }
    }
    base
}

/// Fit residual-stage codebooks on flat frame-major latents.
///
/// Stage `t` clusters the residuals left after subtracting the nearest
/// centroids of stages `< t`. Frames are strided down to at most roughly
/// [`FIT_FRAMES`] points before fitting.
pub(crate) fn fit_rvq(
    latents: &[f64],
    dim: usize,
    k: usize,
    stages: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if dim == 0 || latents.len() % dim != 0 {
        return Err(Error::Shape(format!(
            "latent buffer of {} is not frames of dim {dim}",
            latents.len()
        )));
    }
    let n = latents.len() / dim;
    let stride = (n / FIT_FRAMES).max(1);
    let mut residual: Vec<f64> = latents
        .chunks_exact(dim)
        .step_by(stride)
        .flatten()
        .copied()
        .collect();
    let mut codebooks = Vec::with_capacity(stages);
    for stage in 0..stages {
        let fit = cluster::kmeans(
            &residual,
            dim,
            k,
            FIT_KMEANS_ITERS,
            Init::PlusPlus {
                seed: sub_seed(seed, TAG_STAGE.wrapping_add((stage as u64) << 8)),
            },
        )?;
        for (i, frame) in residual.chunks_exact_mut(dim).enumerate() {
            let j = fit.assignments[i];
            for (x, c) in frame.iter_mut().zip(&fit.centroids[j * dim..(j + 1) * dim]) {
                *x -= c;
            }
        }
        codebooks.push(fit.centroids);
    }
    Ok(codebooks)
}

/// Build a codec from its spec. Deterministic: the same spec always yields a
/// bit-identical codec.
///
/// The analysis matrix is `R * B`: `B` the fixed alias-cancelling base for
/// this frame size and `R` a `latent_dim x frame/2` seeded Gaussian draw with
/// QR-orthonormalized rows. The family id seeds the base draw of `R`; the
/// codec seed adds a small perturbation before re-orthonormalization, so
/// same-family codecs get nearby rotations of the same base.
pub fn make_codec(spec: &CodecSpec) -> Result<SurrogateCodec> {
    spec.validate()?;
    let (d, frame, half) = (spec.latent_dim, spec.frame, spec.frame / 2);
    let base_seed = sub_seed(fnv1a(&spec.family_id), TAG_FAMILY);
    let mut rotation = gaussian_matrix(d, half, base_seed);
    let perturb = gaussian_matrix(d, half, sub_seed(spec.seed, TAG_MEMBER));
    let base_norm = rotation.iter().map(|x| x * x).sum::<f64>().sqrt();
    let pert_norm = perturb.iter().map(|x| x * x).sum::<f64>().sqrt();
    if pert_norm > 0.0 {
        let scale = FAMILY_PERTURBATION * base_norm / pert_norm;
        for (a, p) in rotation.iter_mut().zip(&perturb) {
            *a += scale * p;
        }
    }
    orthonormalize_rows(&mut rotation, d, half)?;
    let window = sine_window(frame);
    let base = tdac_base(frame, &window);
    // analysis = rotation * base; rows orthonormal since both factors' are.
    let mut analysis = vec![0.0f64; d * frame];
    for r in 0..d {
        for (c, &rc) in rotation[r * half..(r + 1) * half].iter().enumerate() {
            if rc == 0.0 {
                continue;
            }
            let src = &base[c * frame..(c + 1) * frame];
            let dst = &mut analysis[r * frame..(r + 1) * frame];
            for (o, b) in dst.iter_mut().zip(src) {
                *o += rc * b;
            }
        }
    }
    let mut codec = SurrogateCodec {
        spec: spec.clone(),
        analysis,
        window,
        codebooks: Vec::new(),
    };
    let pink = synth::pink_noise(spec.rate, FIT_SECONDS, sub_seed(spec.seed, TAG_PINK))?;
    let pink = synth::scale_to_rms(pink, FIT_RMS)?;
    let latents = codec.encode(&pink)?;
    codec.codebooks = fit_rvq(
        &latents.data,
        d,
        spec.codebook_size,
        spec.num_stages,
        spec.seed,
    )?;
    Ok(codec)
}

impl SurrogateCodec {
    pub fn spec(&self) -> &CodecSpec {
        &self.spec
    }

    /// Row-major `latent_dim x frame` analysis matrix.
    pub fn analysis(&self) -> &[f64] {
        &self.analysis
    }

    /// The half-sample-shifted sine window baked into the analysis rows.
    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Row-major `codebook_size x latent_dim` codebook of one stage.
    pub fn codebook(&self, stage: usize) -> &[f64] {
        &self.codebooks[stage]
    }

    /// Check every structural invariant; used after loading from disk.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let (d, frame) = (self.spec.latent_dim, self.spec.frame);
        if self.analysis.len() != d * frame {
            return Err(Error::Shape(format!(
                "analysis is {} elements, expected {}",
                self.analysis.len(),
                d * frame
            )));
        }
        if self.window.len() != frame {
            return Err(Error::Shape("window length differs from frame".into()));
        }
        // Gram matrix within 1e-10 of the identity, entry by entry.
        for r in 0..d {
            let row_r = &self.analysis[r * frame..(r + 1) * frame];
            for c in r..d {
                let row_c = &self.analysis[c * frame..(c + 1) * frame];
                let dot: f64 = row_r.iter().zip(row_c).map(|(a, b)| a * b).sum();
                let want = if r == c { 1.0 } else { 0.0 };
                if !dot.is_finite() || (dot - want).abs() > 1e-10 {
                    return Err(Error::Degenerate(format!(
                        "analysis rows {r},{c} have Gram entry {dot}, want {want}"
                    )));
                }
            }
        }
        let hop = self.spec.hop();
        for n in 0..hop {
            let s = self.window[n] * self.window[n] + self.window[n + hop] * self.window[n + hop];
            if (s - 1.0).abs() > 1e-10 {
                return Err(Error::Degenerate(format!(
                    "window overlap sum at {n} is {s}"
                )));
            }
        }
        if self.codebooks.len() != self.spec.num_stages {
            return Err(Error::Shape(format!(
                "{} codebooks for {} stages",
                self.codebooks.len(),
                self.spec.num_stages
            )));
        }
        for (t, book) in self.codebooks.iter().enumerate() {
            if book.len() != self.spec.codebook_size * d {
                return Err(Error::Shape(format!("stage {t} codebook has wrong size")));
            }
            if !book.iter().all(|x| x.is_finite()) {
                return Err(Error::Degenerate(format!(
                    "stage {t} codebook has non-finite entries"
                )));
            }
            // Duplicate rows would make nearest-neighbor ties systematic.
            let mut order: Vec<usize> = (0..self.spec.codebook_size).collect();
            order.sort_by(|&a, &b| {
                let ra = &book[a * d..(a + 1) * d];
                let rb = &book[b * d..(b + 1) * d];
                ra.iter()
                    .zip(rb)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| !o.is_eq())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            for pair in order.windows(2) {
                let ra = &book[pair[0] * d..(pair[0] + 1) * d];
                let rb = &book[pair[1] * d..(pair[1] + 1) * d];
                if ra == rb {
                    return Err(Error::Degenerate(format!(
                        "stage {t} codebook rows {} and {} are identical",
                        pair[0], pair[1]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Windowed framed analysis: L = 1 + floor((T - frame)/hop) latent
    /// columns, each the analysis matrix applied to a windowed frame.
    pub fn encode(&self, wave: &Waveform) -> Result<LatentSequence> {
        if wave.rate != self.spec.rate {
            return Err(Error::Rate {
                expected: self.spec.rate,
                got: wave.rate,
            });
        }
        let (d, frame, hop) = (self.spec.latent_dim, self.spec.frame, self.spec.hop());
        if wave.len() < frame {
            return Err(Error::TooShort {
                got: wave.len(),
                need: frame,
            });
        }
        let l = 1 + (wave.len() - frame) / hop;
        let mut data = vec![0.0f64; l * d];
        for t in 0..l {
            let src = &wave.samples[t * hop..t * hop + frame];
            let out = &mut data[t * d..(t + 1) * d];
            for (i, slot) in out.iter_mut().enumerate() {
                // The analysis rows carry the window, so this dot product is
                // the windowed projection.
                *slot = self.analysis[i * frame..(i + 1) * frame]
                    .iter()
                    .zip(src)
                    .map(|(a, x)| a * x)
                    .sum();
            }
        }
        LatentSequence::new(data, d, wave.rate)
    }

    /// Residual vector quantization of a latent sequence.
    ///
    /// Per frame, each stage picks the codebook row nearest to the running
    /// residual (ties to the lowest index) and subtracts it; the quantized
    /// latent is the sum of the selected rows.
    pub fn quantize(&self, latent: &LatentSequence) -> Result<(LatentSequence, TokenSequence)> {
        let d = self.spec.latent_dim;
        if latent.dim != d {
            return Err(Error::Shape(format!(
                "latent dim {} does not match codec dim {d}",
                latent.dim
            )));
        }
        let l = latent.num_frames();
        let stages = self.spec.num_stages;
        let mut quantized = vec![0.0f64; l * d];
        let mut indices = Vec::with_capacity(l * stages);
        let mut residual = vec![0.0f64; d];
        for t in 0..l {
            residual.copy_from_slice(latent.frame(t));
            let out = &mut quantized[t * d..(t + 1) * d];
            for book in &self.codebooks {
                let (j, _) = cluster::nearest(book, d, &residual);
                let row = &book[j * d..(j + 1) * d];
                for ((r, q), c) in residual.iter_mut().zip(out.iter_mut()).zip(row) {
                    *r -= c;
                    *q += c;
                }
                indices.push(j as u32);
            }
        }
        let quantized = LatentSequence::new(quantized, d, latent.source_rate)?;
        Ok((quantized, TokenSequence { indices, stages }))
    }

    /// Shared synthesis core: transpose analysis per frame, window, and
    /// overlap-add. This is simultaneously the decoder and the exact adjoint
    /// of [`SurrogateCodec::encode`].
    fn synthesis_ola(&self, latent: &LatentSequence) -> Result<Vec<f64>> {
        let (d, frame, hop) = (self.spec.latent_dim, self.spec.frame, self.spec.hop());
        if latent.dim != d {
            return Err(Error::Shape(format!(
                "latent dim {} does not match codec dim {d}",
                latent.dim
            )));
        }
        let l = latent.num_frames();
        let mut out = vec![0.0f64; frame + (l - 1) * hop];
        for t in 0..l {
            let z = latent.frame(t);
            let dst = &mut out[t * hop..t * hop + frame];
            for (i, &zi) in z.iter().enumerate() {
                if zi == 0.0 {
                    continue;
                }
                // Window already folded into the rows; plain transpose-OLA.
                let row = &self.analysis[i * frame..(i + 1) * frame];
                for (o, a) in dst.iter_mut().zip(row) {
                    *o += zi * a;
                }
            }
        }
        Ok(out)
    }

    /// Synthesis: per-frame transpose of the analysis rows (which carry the
    /// window), overlap-added at the hop. Output length is `frame + (L-1)*hop`.
    pub fn decode(&self, latent: &LatentSequence) -> Result<Waveform> {
        let samples = self.synthesis_ola(latent)?;
        Waveform::new(samples, latent.source_rate)
    }

    /// Gradient of `<encode(s), cotangent>` with respect to `s`.
    ///
    /// The encoder is linear, so the gradient is independent of `s` and
    /// numerically identical to [`SurrogateCodec::decode`] applied to the
    /// cotangent; it is exposed separately because callers mean different
    /// things by it.
    pub fn encode_vjp(&self, cotangent: &LatentSequence) -> Result<Waveform> {
        let samples = self.synthesis_ola(cotangent)?;
        Waveform::new(samples, self.spec.rate)
    }

    /// The full lossy round trip: resample to the codec rate, encode,
    /// quantize, decode, resample back, and fit to the input length.
    pub fn resynthesize(&self, wave: &Waveform) -> Result<Waveform> {
        if wave.is_empty() {
            return Err(Error::Empty("resynthesis input"));
        }
        let native = crate::audio::resample(wave, self.spec.rate)?;
        // Pad to the hop grid (and to at least one frame) so the synthesis
        // output covers every input sample.
        let hop = self.spec.hop();
        let mut padded = crate::audio::pad_to_multiple(&native, hop)?;
        if padded.len() < self.spec.frame {
            padded.samples.resize(self.spec.frame, 0.0);
        }
        let latent = self.encode(&padded)?;
        let (quantized, _) = self.quantize(&latent)?;
        let decoded = self.decode(&quantized)?;
        let mut back = crate::audio::resample(&decoded, wave.rate)?;
        back.samples.resize(wave.len(), 0.0);
        Ok(back)
    }
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("codec file truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn take_u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn take_u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn take_f64s(&mut self, n: usize, what: &'static str) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| {
            Error::Format("codec file matrix size overflows".into())
        })?)?;
        let mut out = Vec::with_capacity(n);
        for (i, chunk) in raw.chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::Format(format!("non-finite {what} entry {i}")));
            }
            out.push(v);
        }
        Ok(out)
    }
}

/// Serialize a codec to its single-file binary form.
pub fn codec_to_bytes(codec: &SurrogateCodec) -> Vec<u8> {
    let spec = &codec.spec;
    let mut out = Vec::new();
    out.extend_from_slice(CODEC_MAGIC);
    push_u32(&mut out, spec.family_id.len() as u32);
    out.extend_from_slice(spec.family_id.as_bytes());
    push_u32(&mut out, spec.rate);
    push_u32(&mut out, spec.frame as u32);
    push_u32(&mut out, spec.latent_dim as u32);
    push_u32(&mut out, spec.codebook_size as u32);
    push_u32(&mut out, spec.num_stages as u32);
    out.extend_from_slice(&spec.seed.to_le_bytes());
    for v in &codec.analysis {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for book in &codec.codebooks {
        for v in book {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parse and fully validate a codec file.
///
/// Every field is bounds-checked before allocation and the reconstructed
/// codec must pass the same invariants [`make_codec`] guarantees, so a
/// hostile file cannot produce a codec the rest of the pipeline would choke
/// on.
pub fn codec_from_bytes(bytes: &[u8]) -> Result<SurrogateCodec> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != CODEC_MAGIC {
        return Err(Error::Format("not a codec file (bad magic)".into()));
    }
    let family_len = cur.take_u32()? as usize;
    if family_len > MAX_FAMILY_BYTES {
        return Err(Error::Format(format!("family_id length {family_len} too large")));
    }
    let family_id = std::str::from_utf8(cur.take(family_len)?)
        .map_err(|_| Error::Format("family_id is not UTF-8".into()))?
        .to_string();
    let rate = cur.take_u32()?;
    let frame = cur.take_u32()? as usize;
    let latent_dim = cur.take_u32()? as usize;
    let codebook_size = cur.take_u32()? as usize;
    let num_stages = cur.take_u32()? as usize;
    let seed = cur.take_u64()?;
    let spec = CodecSpec {
        family_id,
        rate,
        frame,
        latent_dim,
        codebook_size,
        num_stages,
        seed,
    };
    spec.validate().map_err(|e| Error::Format(e.to_string()))?;
    let analysis = cur.take_f64s(latent_dim * frame, "analysis")?;
    let mut codebooks = Vec::with_capacity(num_stages);
    for _ in 0..num_stages {
        codebooks.push(cur.take_f64s(codebook_size * latent_dim, "codebook")?);
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after codec data",
            bytes.len() - cur.pos
        )));
    }
    let codec = SurrogateCodec {
        window: sine_window(spec.frame),
        spec,
        analysis,
        codebooks,
    };
    codec.validate().map_err(|e| Error::Format(e.to_string()))?;
    Ok(codec)
}

/// Write a codec to disk in the single-file binary format.
pub fn save_codec(codec: &SurrogateCodec, path: &Path) -> Result<()> {
    std::fs::write(path, codec_to_bytes(codec))?;
    Ok(())
}

/// Read a codec from disk, validating all invariants.
pub fn load_codec(path: &Path) -> Result<SurrogateCodec> {
    codec_from_bytes(&std::fs::read(path)?)
}

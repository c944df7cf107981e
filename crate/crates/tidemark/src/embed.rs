//! Watermark embedding: constrained optimization of an additive
//! perturbation.
//!
//! The embedder looks for a small signal `delta` that pushes a clip's latent
//! projection above a target, subject to a hard per-sample amplitude budget
//! derived from the clip's level and a target SDR. Single-codec embedding
//! drives the raw projection toward the key's `gamma`; joint embedding
//! drives a committee of codecs past their calibrated thresholds at once,
//! each hinge normalized by the codec's mean clean-audio gap so every codec
//! pulls with comparable weight.
//!
//! The perturbation lives at a fixed work rate. Each step resamples the
//! current candidate to every codec's native rate, measures the hinge loss
//! there, and pulls the gradient back through the exact adjoint of the
//! resampler, so cross-rate gradients are correct rather than approximate.

use serde::{Deserialize, Serialize};

use crate::audio::{resample, Resampler, Waveform};
use crate::codec::{LatentSequence, SurrogateCodec};
use crate::error::{Error, Result};
use crate::key::{wave_projection, SecretKey};

/// Hyperparameters of the embedding optimizer.
///
/// The defaults are the reference operating point; configs loaded from disk
/// fill missing fields from these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    /// Target alignment score installed into newly derived keys. The loss
    /// itself reads the key's own `gamma`, so a key embeds identically
    /// everywhere.
    pub gamma: f64,
    /// Target signal-to-distortion ratio in dB; sets the amplitude budget.
    pub sdr_db: f64,
    /// Budget multiplier applied to the SDR-derived amplitude.
    pub beta: f64,
    /// Absolute floor of the budget.
    pub eps_min: f64,
    /// Absolute ceiling of the budget.
    pub eps_max: f64,
    /// Optimizer iterations.
    pub n_steps: usize,
    /// Explicit optimizer step; `None` uses the budget-relative eps/10.
    pub step_size: Option<f64>,
    /// Exponential decay constants of the two adaptive moments.
    pub moment_decays: (f64, f64),
    /// Rate the perturbation is maintained at in joint mode.
    pub work_rate: u32,
    /// The work buffer is zero-padded to a multiple of this many samples.
    pub pad_block: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            gamma: 1.5,
            sdr_db: 30.0,
            beta: 2.5,
            eps_min: 1e-4,
            eps_max: 0.1,
            n_steps: 150,
            step_size: None,
            moment_decays: (0.9, 0.999),
            work_rate: 44_100,
            pad_block: 4096,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !self.sdr_db.is_finite() {
            return Err(Error::Config(format!("sdr_db is {}", self.sdr_db)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.eps_min > 0.0 && self.eps_min <= self.eps_max && self.eps_max.is_finite()) {
            return Err(Error::Config(format!(
                "budget clamps must satisfy 0 < eps_min <= eps_max, got [{}, {}]",
                self.eps_min, self.eps_max
            )));
        }
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be at least 1".into()));
        }
        if let Some(s) = self.step_size {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("step_size must be positive, got {s}")));
            }
        }
        let (b1, b2) = self.moment_decays;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::Config(format!(
                "moment decays must lie in [0, 1), got ({b1}, {b2})"
            )));
        }
        if self.work_rate == 0 {
            return Err(Error::Config("work_rate must be positive".into()));
        }
        if self.pad_block == 0 {
            return Err(Error::Config("pad_block must be positive".into()));
        }
        Ok(())
    }
}

/// Record of one embedding run.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedTrace {
    /// Loss at the start of every step, ending with the post-final-update
    /// value; entry 0 is the unperturbed loss.
    pub loss: Vec<f64>,
    /// Sup norm of the perturbation entering every recorded step, aligned
    /// with `loss`; entry 0 is always zero. The hard clip keeps every entry
    /// within `eps`.
    pub delta_sup: Vec<f64>,
    /// Projection score per committee codec at every recorded step, aligned
    /// with `loss`.
    pub scores: Vec<Vec<f64>>,
    /// Projection score per committee codec at the returned perturbation.
    pub final_scores: Vec<f64>,
    /// The amplitude budget the run was clipped to.
    pub eps: f64,
    /// Largest absolute sample of the returned perturbation.
    pub delta_inf: f64,
    /// Step whose iterate was returned (lowest recorded loss).
    pub best_step: usize,
}

/// Per-sample amplitude budget: `clip(beta * RMS * 10^(-SDR/20), lo, hi)`.
pub fn compute_budget(wave: &Waveform, cfg: &EmbedConfig) -> Result<f64> {
    if wave.is_empty() {
        return Err(Error::Empty("waveform"));
    }
    let rms = crate::audio::rms(wave)?;
    let raw = cfg.beta * rms * 10f64.powf(-cfg.sdr_db / 20.0);
    Ok(raw.clamp(cfg.eps_min, cfg.eps_max))
}

/// One hinge the optimizer descends: either the raw-projection form used in
/// single-codec mode or the calibrated normalized form used jointly.
enum Objective<'a> {
    Gamma {
        codec: &'a SurrogateCodec,
        key: &'a SecretKey,
    },
    Calibrated {
        codec: &'a SurrogateCodec,
        key: &'a SecretKey,
        tau: f64,
        alpha: f64,
    },
}

impl<'a> Objective<'a> {
    fn codec(&self) -> &'a SurrogateCodec {
        match self {
            Objective::Gamma { codec, .. } | Objective::Calibrated { codec, .. } => codec,
        }
    }

    fn key(&self) -> &'a SecretKey {
        match self {
            Objective::Gamma { key, .. } | Objective::Calibrated { key, .. } => key,
        }
    }

    /// Hinge value and its derivative with respect to the projection.
    fn hinge(&self, p: f64) -> (f64, f64) {
        match self {
            Objective::Gamma { key, .. } => {
                let g = key.gamma;
                if p < g {
                    (g - p, -1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            Objective::Calibrated { tau, alpha, .. } => {
                if p < *tau {
                    ((tau - p) / alpha, -1.0 / alpha)
                } else {
                    (0.0, 0.0)
                }
            }
        }
    }
}

/// Hinge toward the key's target alignment score on the pre-quantization
/// projection: `ReLU(gamma - score)`.
pub fn loss_single(wave: &Waveform, codec: &SurrogateCodec, key: &SecretKey) -> Result<f64> {
    let p = wave_projection(codec, &key.axis, wave, false)?;
    Ok((key.gamma - p).max(0.0))
}

/// Mean calibrated hinge over a committee:
/// `(1/|C|) * sum ReLU(tau_c - score_c) / alpha_c`,
/// resampling the input to each codec's native rate first.
pub fn loss_joint(wave: &Waveform, committee: &[(&SurrogateCodec, &SecretKey)]) -> Result<f64> {
    let objectives = calibrated_objectives(committee)?;
    let mut total = 0.0;
    for obj in &objectives {
        let p = wave_projection(obj.codec(), &obj.key().axis, wave, false)?;
        total += obj.hinge(p).0;
    }
    Ok(total / objectives.len() as f64)
}

/// Gradient of [`loss_single`] with respect to the input samples.
///
/// The backward pass is the exact adjoint of the forward path: the
/// projection cotangent enters the codec through its transpose and, when
/// the clip is not at the codec's native rate, comes back through the
/// resampler's adjoint. Where the hinge is inactive the gradient is zero.
pub fn grad_single(
    wave: &Waveform,
    codec: &SurrogateCodec,
    key: &SecretKey,
) -> Result<Vec<f64>> {
    objective_gradient(wave, &[Objective::Gamma { codec, key }])
}

/// Gradient of [`loss_joint`] with respect to the input samples.
pub fn grad_joint(
    wave: &Waveform,
    committee: &[(&SurrogateCodec, &SecretKey)],
) -> Result<Vec<f64>> {
    let objectives = calibrated_objectives(committee)?;
    objective_gradient(wave, &objectives)
}

/// d(mean hinge)/d(samples), at the wave's own rate.
fn objective_gradient(wave: &Waveform, objectives: &[Objective]) -> Result<Vec<f64>> {
    if wave.is_empty() {
        return Err(Error::Empty("waveform"));
    }
    let count = objectives.len() as f64;
    let n = wave.len();
    let mut grad = vec![0.0f64; n];
    for obj in objectives {
        let codec = obj.codec();
        let link = if codec.spec().rate == wave.rate {
            None
        } else {
            Some(Resampler::new(wave.rate, codec.spec().rate)?)
        };
        let native: Vec<f64> = match &link {
            Some(rs) => rs.apply(&wave.samples),
            None => wave.samples.clone(),
        };
        let native = Waveform::new(native, codec.spec().rate)?;
        let z = codec.encode(&native)?;
        let p = crate::key::projection_score(&z, &obj.key().axis)?;
        let (_, slope) = obj.hinge(p);
        if slope == 0.0 {
            continue;
        }
        let frames = z.num_frames();
        let d = codec.spec().latent_dim;
        // d p / d z is v/L on every frame; fold in the hinge slope and the
        // committee mean, exactly as the optimizer does.
        let w = slope / (count * frames as f64);
        let mut zbar = Vec::with_capacity(frames * d);
        for _ in 0..frames {
            zbar.extend(obj.key().axis.v.iter().map(|v| w * v));
        }
        let zbar = LatentSequence::new(zbar, d, codec.spec().rate)?;
        let g_native = codec.encode_vjp(&zbar)?;
        match &link {
            Some(rs) => {
                // encode ignores a sub-hop tail; pad the cotangent back to
                // the forward output length before the adjoint.
                let mut cot = g_native.samples;
                cot.resize(rs.output_len(n), 0.0);
                let back = rs.apply_adjoint(&cot, n);
                for (g, x) in grad.iter_mut().zip(&back) {
                    *g += x;
                }
            }
            None => {
                for (g, x) in grad.iter_mut().zip(&g_native.samples) {
                    *g += x;
                }
            }
        }
    }
    Ok(grad)
}

fn calibrated_objectives<'a>(
    committee: &[(&'a SurrogateCodec, &'a SecretKey)],
) -> Result<Vec<Objective<'a>>> {
    if committee.is_empty() {
        return Err(Error::Config("committee must not be empty".into()));
    }
    committee
        .iter()
        .map(|&(codec, key)| {
            let stats = key.stats.as_ref().ok_or_else(|| {
                Error::Config(format!(
                    "key for {} is not calibrated",
                    codec.spec().identity()
                ))
            })?;
            stats.validate()?;
            Ok(Objective::Calibrated {
                codec,
                key,
                tau: stats.tau,
                alpha: stats.alpha,
            })
        })
        .collect()
}

/// Optimize toward the key's `gamma` against one codec.
///
/// When the input already sits at the codec's rate the perturbation lives
/// there directly; otherwise it lives at the configured work rate like in
/// joint mode.
pub fn embed_single(
    wave: &Waveform,
    codec: &SurrogateCodec,
    key: &SecretKey,
    cfg: &EmbedConfig,
) -> Result<(Waveform, EmbedTrace)> {
    key.validate()?;
    let domain = if wave.rate == codec.spec().rate {
        wave.rate
    } else {
        cfg.work_rate
    };
    embed_core(wave, &[Objective::Gamma { codec, key }], cfg, domain)
}

/// Optimize the mean calibrated hinge against a committee of codecs, with
/// the perturbation maintained at the configured work rate.
pub fn embed_joint(
    wave: &Waveform,
    committee: &[(&SurrogateCodec, &SecretKey)],
    cfg: &EmbedConfig,
) -> Result<(Waveform, EmbedTrace)> {
    let objectives = calibrated_objectives(committee)?;
    embed_core(wave, &objectives, cfg, cfg.work_rate)
}

/// The shared optimizer: adaptive-moment descent on `delta` with a hard
/// amplitude clip after every update, returning the best iterate.
fn embed_core(
    wave: &Waveform,
    objectives: &[Objective],
    cfg: &EmbedConfig,
    domain_rate: u32,
) -> Result<(Waveform, EmbedTrace)> {
    cfg.validate()?;
    if wave.is_empty() {
        return Err(Error::Empty("waveform"));
    }
    let eps = compute_budget(wave, cfg)?;
    let lr = cfg.step_size.unwrap_or(eps / 10.0);

    // The base signal in the work domain, zero-padded to the block size.
    let work = resample(wave, domain_rate)?;
    let mut base = work.samples;
    let pad = (cfg.pad_block - base.len() % cfg.pad_block) % cfg.pad_block;
    base.resize(base.len() + pad, 0.0);
    let n = base.len();

    // Forward/adjoint resamplers per codec; None when rates already match.
    let links: Vec<Option<Resampler>> = objectives
        .iter()
        .map(|obj| {
            let to = obj.codec().spec().rate;
            if to == domain_rate {
                Ok(None)
            } else {
                Resampler::new(domain_rate, to).map(Some)
            }
        })
        .collect::<Result<_>>()?;

    let count = objectives.len() as f64;
    let mut delta = vec![0.0f64; n];
    let mut best_delta = vec![0.0f64; n];
    let mut best_loss = f64::INFINITY;
    let mut best_step = 0usize;
    let mut m1 = vec![0.0f64; n];
    let mut m2 = vec![0.0f64; n];
    let (b1, b2) = cfg.moment_decays;
    let mut losses = Vec::with_capacity(cfg.n_steps + 1);
    let mut sups = Vec::with_capacity(cfg.n_steps + 1);
    let mut scores = Vec::with_capacity(cfg.n_steps + 1);
    let mut candidate = vec![0.0f64; n];

    for step in 0..=cfg.n_steps {
        for i in 0..n {
            candidate[i] = base[i] + delta[i];
        }
        // Forward pass: per-codec projection, hinge, and slope.
        let mut loss = 0.0;
        let mut slopes = Vec::with_capacity(objectives.len());
        let mut step_scores = Vec::with_capacity(objectives.len());
        for (obj, link) in objectives.iter().zip(&links) {
            let native: Vec<f64> = match link {
                Some(rs) => rs.apply(&candidate),
                None => candidate.clone(),
            };
            let native = Waveform::new(native, obj.codec().spec().rate)?;
            let z = obj.codec().encode(&native)?;
            let p = crate::key::projection_score(&z, &obj.key().axis)?;
            let (l, dl) = obj.hinge(p);
            loss += l / count;
            slopes.push((dl, z.num_frames()));
            step_scores.push(p);
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite { what: "embedding loss", step });
        }
        losses.push(loss);
        sups.push(delta.iter().fold(0.0f64, |a, &x| a.max(x.abs())));
        scores.push(step_scores);
        if loss < best_loss {
            best_loss = loss;
            best_step = step;
            best_delta.copy_from_slice(&delta);
        }
        if loss == 0.0 || step == cfg.n_steps {
            break;
        }

        // Backward pass: d loss / d delta, accumulated in the work domain.
        let mut grad = vec![0.0f64; n];
        for ((obj, link), &(slope, frames)) in objectives.iter().zip(&links).zip(&slopes) {
            if slope == 0.0 {
                continue;
            }
            let codec = obj.codec();
            let d = codec.spec().latent_dim;
            // d p / d z is v/L on every frame; fold in the hinge slope and
            // the committee mean.
            let w = slope / (count * frames as f64);
            let mut zbar = Vec::with_capacity(frames * d);
            for _ in 0..frames {
                zbar.extend(obj.key().axis.v.iter().map(|v| w * v));
            }
            let zbar = LatentSequence::new(zbar, d, codec.spec().rate)?;
            let g_native = codec.encode_vjp(&zbar)?;
            match link {
                Some(rs) => {
                    // encode ignores a sub-hop tail, so pad the cotangent
                    // back to the forward input length before the adjoint.
                    let mut cot = g_native.samples;
                    cot.resize(rs.output_len(n), 0.0);
                    let back = rs.apply_adjoint(&cot, n);
                    for (g, x) in grad.iter_mut().zip(&back) {
                        *g += x;
                    }
                }
                None => {
                    for (g, x) in grad.iter_mut().zip(&g_native.samples) {
                        *g += x;
                    }
                }
            }
        }
        if let Some(pos) = grad.iter().position(|g| !g.is_finite()) {
            let _ = pos;
            return Err(Error::NonFinite { what: "embedding gradient", step });
        }

        // Adaptive-moment update with bias correction, then the hard clip
        // that enforces the amplitude budget as a constraint.
        let t = (step + 1) as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for i in 0..n {
            m1[i] = b1 * m1[i] + (1.0 - b1) * grad[i];
            m2[i] = b2 * m2[i] + (1.0 - b2) * grad[i] * grad[i];
            let update = lr * (m1[i] / c1) / ((m2[i] / c2).sqrt() + 1e-8);
            delta[i] = (delta[i] - update).clamp(-eps, eps);
        }
    }

    // A clip that already satisfies every hinge is returned untouched, bit
    // for bit: delta never left zero.
    if losses[0] == 0.0 {
        let final_scores = objectives
            .iter()
            .map(|obj| wave_projection(obj.codec(), &obj.key().axis, wave, false))
            .collect::<Result<Vec<f64>>>()?;
        let trace = EmbedTrace {
            loss: losses,
            delta_sup: sups,
            scores,
            final_scores,
            eps,
            delta_inf: 0.0,
            best_step: 0,
        };
        return Ok((wave.clone(), trace));
    }

    for i in 0..n {
        candidate[i] = base[i] + best_delta[i];
    }
    // Final per-codec scores at the returned iterate, in the work domain
    // the optimizer saw.
    let mut final_scores = Vec::with_capacity(objectives.len());
    for (obj, link) in objectives.iter().zip(&links) {
        let native: Vec<f64> = match link {
            Some(rs) => rs.apply(&candidate),
            None => candidate.clone(),
        };
        let native = Waveform::new(native, obj.codec().spec().rate)?;
        let z = obj.codec().encode(&native)?;
        final_scores.push(crate::key::projection_score(&z, &obj.key().axis)?);
    }
    let delta_inf = best_delta.iter().fold(0.0f64, |a, &x| a.max(x.abs()));

    // Back to the caller's rate and length, clipped to full scale once.
    candidate.truncate(n - pad);
    let out = Waveform::new(candidate, domain_rate)?;
    let mut out = if domain_rate == wave.rate {
        out
    } else {
        resample(&out, wave.rate)?
    };
    out.samples.resize(wave.len(), 0.0);
    for x in out.samples.iter_mut() {
        *x = x.clamp(-1.0, 1.0);
    }

    let trace = EmbedTrace {
        loss: losses,
        delta_sup: sups,
        scores,
        final_scores,
        eps,
        delta_inf,
        best_step,
    };
    Ok((out, trace))
}

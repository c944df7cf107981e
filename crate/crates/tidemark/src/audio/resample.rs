//! Windowed-sinc sample-rate conversion with an exact adjoint.
//!
//! Conversion is a sparse linear map y = A x. Rows of A are Kaiser-windowed
//! sinc taps: 16 zero crossings per side at the lower of the two rates,
//! cutoff at 0.45 of the lower rate, each row normalized to unit sum so DC
//! passes exactly (edges included). `apply` computes A x; `apply_adjoint`
//! computes A^T g with the same taps, which is what pulls codec-rate
//! gradients back to the work rate during joint optimization.

use crate::audio::Waveform;
use crate::{Error, Result};

const ZERO_CROSSINGS: f64 = 16.0;
const CUTOFF: f64 = 0.45;
const KAISER_BETA: f64 = 8.0;
/// Phase tables beyond this many phases fall back to on-the-fly taps.
const MAX_TABLE_PHASES: u64 = 1 << 14;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

pub(crate) fn bessel_i0(x: f64) -> f64 {
    // Series I0(x) = sum ((x/2)^(2k) / (k!)^2); converges fast for |x| <= ~20.
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= q / ((k * k) as f64);
        sum += term;
        if term < sum * 1e-18 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let px = std::f64::consts::PI * x;
    px.sin() / px
}

/// Precomputed sample-rate converter between two fixed rates.
#[derive(Debug, Clone)]
pub struct Resampler {
    from: u32,
    to: u32,
    /// Input-sample step per output sample, reduced: x(n) = n * down / up.
    up: u64,
    down: u64,
    /// Input-domain half-width of the kernel support.
    half: f64,
    /// Low-pass cutoff in cycles per input sample.
    fc: f64,
    i0_beta: f64,
    /// Per-phase taps (normalized to unit sum) and their leftmost offset,
    /// empty when the phase count exceeds the table cap.
    phases: Vec<(isize, Vec<f64>)>,
}

impl Resampler {
    pub fn new(from: u32, to: u32) -> Result<Self> {
        if from == 0 || to == 0 {
            return Err(Error::Config("sample rates must be nonzero".into()));
        }
        let g = gcd(from as u64, to as u64);
        let up = to as u64 / g;
        let down = from as u64 / g;
        let ratio = to as f64 / from as f64;
        let fc = CUTOFF * ratio.min(1.0);
        let half = ZERO_CROSSINGS / ratio.min(1.0);
        let i0_beta = bessel_i0(KAISER_BETA);
        let mut rs = Self {
            from,
            to,
            up,
            down,
            half,
            fc,
            i0_beta,
            phases: Vec::new(),
        };
        if from != to && up <= MAX_TABLE_PHASES {
            rs.phases = (0..up).map(|p| rs.raw_taps(p as f64 / up as f64)).collect();
        }
        Ok(rs)
    }

    pub fn from_rate(&self) -> u32 {
        self.from
    }

    pub fn to_rate(&self) -> u32 {
        self.to
    }

    /// Output length for a given input length: round(len * to / from).
    pub fn output_len(&self, input_len: usize) -> usize {
        let n = input_len as u128;
        ((2 * n * self.to as u128 + self.from as u128) / (2 * self.from as u128)) as usize
    }

    fn kernel(&self, u: f64) -> f64 {
        let t = u / self.half;
        if t.abs() > 1.0 {
            return 0.0;
        }
        let window = bessel_i0(KAISER_BETA * (1.0 - t * t).sqrt()) / self.i0_beta;
        2.0 * self.fc * sinc(2.0 * self.fc * u) * window
    }

    /// Taps for a fractional offset in [0, 1): (leftmost integer offset,
    /// weights normalized to unit sum over the full support).
    fn raw_taps(&self, frac: f64) -> (isize, Vec<f64>) {
        let lo = (frac - self.half).ceil() as isize;
        let hi = (frac + self.half).floor() as isize;
        let mut taps: Vec<f64> = (lo..=hi)
            .map(|j| self.kernel(j as f64 - frac))
            .collect();
        let sum: f64 = taps.iter().sum();
        if sum.abs() > 1e-12 {
            for t in &mut taps {
                *t /= sum;
            }
        }
        (lo, taps)
    }

    /// Row of A for output index n: (first input index, tap slice); the
    /// fallback buffer is used when no phase table exists.
    fn row<'a>(&'a self, n: usize, scratch: &'a mut (isize, Vec<f64>)) -> (isize, &'a [f64]) {
        let num = n as u128 * self.down as u128;
        let base = (num / self.up as u128) as isize;
        let phase = (num % self.up as u128) as usize;
        if !self.phases.is_empty() {
            let (lo, taps) = &self.phases[phase];
            (base + lo, taps.as_slice())
        } else {
            *scratch = self.raw_taps(phase as f64 / self.up as f64);
            (base + scratch.0, scratch.1.as_slice())
        }
    }

    /// Resample a sample buffer at the `from` rate to the `to` rate.
    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        if self.from == self.to {
            return input.to_vec();
        }
        let n_out = self.output_len(input.len());
        let n_in = input.len() as isize;
        let mut out = Vec::with_capacity(n_out);
        let mut scratch = (0isize, Vec::new());
        for n in 0..n_out {
            let (start, taps) = self.row(n, &mut scratch);
            let mut acc = 0.0;
            if start >= 0 && start + taps.len() as isize <= n_in {
                // Interior fast path: the whole support is in range.
                let s = start as usize;
                for (t, x) in taps.iter().zip(&input[s..s + taps.len()]) {
                    acc += t * x;
                }
            } else {
                // Edge: renormalize over the in-range taps.
                let mut used = 0.0;
                for (j, t) in taps.iter().enumerate() {
                    let i = start + j as isize;
                    if i >= 0 && i < n_in {
                        acc += t * input[i as usize];
                        used += t;
                    }
                }
                if used.abs() > 1e-12 {
                    acc /= used;
                } else {
                    acc = 0.0;
                }
            }
            out.push(acc);
        }
        out
    }

    /// Transpose of [`Resampler::apply`]: map a cotangent at the output rate
    /// back to a gradient at the input rate for inputs of `input_len`.
    pub fn apply_adjoint(&self, cotangent: &[f64], input_len: usize) -> Vec<f64> {
        if self.from == self.to {
            let mut g = cotangent.to_vec();
            g.resize(input_len, 0.0);
            return g;
        }
        let n_in = input_len as isize;
        let mut grad = vec![0.0; input_len];
        let mut scratch = (0isize, Vec::new());
        for (n, &cg) in cotangent.iter().enumerate() {
            let (start, taps) = self.row(n, &mut scratch);
            if start >= 0 && start + taps.len() as isize <= n_in {
                let s = start as usize;
                for (t, g) in taps.iter().zip(&mut grad[s..s + taps.len()]) {
                    *g += t * cg;
                }
            } else {
                let mut used = 0.0;
                for (j, t) in taps.iter().enumerate() {
                    let i = start + j as isize;
                    if i >= 0 && i < n_in {
                        used += t;
                    }
                }
                if used.abs() <= 1e-12 {
                    continue;
                }
                for (j, t) in taps.iter().enumerate() {
                    let i = start + j as isize;
                    if i >= 0 && i < n_in {
                        grad[i as usize] += t / used * cg;
                    }
                }
            }
        }
        grad
    }
}

/// Resample a waveform to `target_rate`. Equal rates return a plain copy.
pub fn resample(wave: &Waveform, target_rate: u32) -> Result<Waveform> {
    if wave.rate == target_rate {
        return Ok(wave.clone());
    }
    let rs = Resampler::new(wave.rate, target_rate)?;
    Waveform::new(rs.apply(&wave.samples), target_rate)
}

//! Zero-bit audio watermarking in the latent space of a surrogate codec.
//!
//! The pipeline: build a deterministic surrogate codec (orthonormal analysis,
//! residual vector quantizer), derive a secret direction from its codebook,
//! calibrate a detection threshold on a null corpus, then embed by nudging a
//! signal (within a hard per-sample budget) until the temporal mean of its
//! latent projection onto the secret direction clears the target. Detection
//! is a threshold test on the same projection; robustness is evaluated
//! against DSP attacks and codec resynthesis.

pub mod attack;
pub mod audio;
pub mod bench;
pub mod cluster;
pub mod codec;
pub mod detect;
pub mod embed;
pub mod key;
pub mod synth;

mod error;

pub use error::{Error, Result};

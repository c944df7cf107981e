//! Minimal RIFF/WAVE reader and writer.
//!
//! Reads PCM 16-bit integer and IEEE 32-bit float files, mono or stereo;
//! stereo is downmixed by channel mean. Writes 32-bit float mono. The reader
//! walks chunks defensively: every size is bounds-checked against the buffer,
//! unknown chunks are skipped, and absurd declarations are rejected rather
//! than allocated.

use std::path::Path;

use crate::audio::Waveform;
use crate::{Error, Result};

/// Upper bound on the data chunk we are willing to decode (1 GiB).
const MAX_DATA_BYTES: usize = 1 << 30;

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;

struct FmtChunk {
    format: u16,
    channels: u16,
    rate: u32,
    bits: u16,
}

fn read_u16(bytes: &[u8], at: usize) -> Option<u16> {
    Some(u16::from_le_bytes(bytes.get(at..at + 2)?.try_into().ok()?))
}

fn read_u32(bytes: &[u8], at: usize) -> Option<u32> {
    Some(u32::from_le_bytes(bytes.get(at..at + 4)?.try_into().ok()?))
}

fn parse_fmt(payload: &[u8]) -> Result<FmtChunk> {
    if payload.len() < 16 {
        return Err(Error::Format(format!(
            "fmt chunk too small: {} bytes",
            payload.len()
        )));
    }
    let format = read_u16(payload, 0).unwrap();
    let channels = read_u16(payload, 2).unwrap();
    let rate = read_u32(payload, 4).unwrap();
    let bits = read_u16(payload, 14).unwrap();
    if rate == 0 {
        return Err(Error::Format("sample rate of zero".into()));
    }
    match channels {
        1 | 2 => {}
        n => return Err(Error::Format(format!("unsupported channel count {n}"))),
    }
    match (format, bits) {
        (FORMAT_PCM, 16) | (FORMAT_IEEE_FLOAT, 32) => {}
        (f, b) => {
            return Err(Error::Format(format!(
                "unsupported encoding: format tag {f}, {b} bits per sample"
            )))
        }
    }
    Ok(FmtChunk {
        format,
        channels,
        rate,
        bits,
    })
}

/// Decode a WAV file from raw bytes.
pub fn parse_wav(bytes: &[u8]) -> Result<Waveform> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("not a RIFF/WAVE file".into()));
    }
    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    let mut off = 12usize;
    while off + 8 <= bytes.len() {
        let id = &bytes[off..off + 4];
        let size = read_u32(bytes, off + 4).unwrap() as usize;
        let body_start = off + 8;
        let body_end = body_start
            .checked_add(size)
            .ok_or_else(|| Error::Format("chunk size overflow".into()))?;
        if body_end > bytes.len() {
            return Err(Error::Format(format!(
                "chunk '{}' of {size} bytes overruns file",
                String::from_utf8_lossy(id)
            )));
        }
        let payload = &bytes[body_start..body_end];
        match id {
            b"fmt " => fmt = Some(parse_fmt(payload)?),
            b"data" => {
                if size > MAX_DATA_BYTES {
                    return Err(Error::Format(format!("data chunk of {size} bytes refused")));
                }
                data = Some(payload);
            }
            _ => {}
        }
        // Chunks are word-aligned; odd sizes carry one pad byte.
        off = body_end + (size & 1);
    }
    let fmt = fmt.ok_or_else(|| Error::Format("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Format("missing data chunk".into()))?;

    let bytes_per_sample = (fmt.bits / 8) as usize;
    let group = bytes_per_sample * fmt.channels as usize;
    let n_groups = data.len() / group;
    let mut samples = Vec::with_capacity(n_groups);
    for g in 0..n_groups {
        let mut acc = 0.0f64;
        for ch in 0..fmt.channels as usize {
            let at = g * group + ch * bytes_per_sample;
            let v = match fmt.format {
                FORMAT_PCM => {
                    let raw = i16::from_le_bytes([data[at], data[at + 1]]);
                    // 16-bit convention: -32768 maps to -1.0 exactly.
                    f64::from(raw) / 32768.0
                }
                FORMAT_IEEE_FLOAT => {
                    let raw = f32::from_le_bytes([
                        data[at],
                        data[at + 1],
                        data[at + 2],
                        data[at + 3],
                    ]);
                    if !raw.is_finite() {
                        return Err(Error::Format("non-finite float sample".into()));
                    }
                    f64::from(raw)
                }
                _ => unreachable!(),
            };
            acc += v;
        }
        let v = acc / f64::from(fmt.channels);
        samples.push(v.clamp(-1.0, 1.0));
    }
    Waveform::new(samples, fmt.rate)
}

/// Encode a waveform as a mono 32-bit float WAV file. Samples outside [-1, 1]
/// are clipped at this boundary.
pub fn wav_bytes(wave: &Waveform) -> Vec<u8> {
    let n = wave.len() as u32;
    let data_bytes = n * 4;
    let riff_size = 4 + (8 + 16) + (8 + 4) + (8 + data_bytes);
    let mut out = Vec::with_capacity(riff_size as usize + 8);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&riff_size.to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_IEEE_FLOAT.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&wave.rate.to_le_bytes());
    out.extend_from_slice(&(wave.rate.wrapping_mul(4)).to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&32u16.to_le_bytes());
    out.extend_from_slice(b"fact");
    out.extend_from_slice(&4u32.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_bytes.to_le_bytes());
    for s in &wave.samples {
        let clipped = s.clamp(-1.0, 1.0) as f32;
        out.extend_from_slice(&clipped.to_le_bytes());
    }
    out
}

/// Read a WAV file from disk.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    parse_wav(&std::fs::read(path)?)
}

/// Write a waveform to disk as mono float32 WAV.
pub fn save_wav(path: impl AsRef<Path>, wave: &Waveform) -> Result<()> {
    std::fs::write(path, wav_bytes(wave))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};

    fn noise_f32(n: usize, seed: u64, rate: u32) -> Waveform {
        // Generated at f32 precision so the float32 container is lossless.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..n)
            .map(|_| f64::from(rng.random_range(-0.9f32..0.9f32)))
            .collect();
        Waveform::new(samples, rate).unwrap()
    }

    #[test]
    fn float32_round_trip_is_bit_exact() {
        let w = noise_f32(24_000, 7, 24_000);
        let decoded = parse_wav(&wav_bytes(&w)).unwrap();
        assert_eq!(decoded.rate, 24_000);
        assert_eq!(decoded.samples, w.samples);
    }

    #[test]
    fn pcm16_extremes_map_to_documented_values() {
        // Hand-built PCM16 mono file with samples {0, 32767, -32768}.
        let mut data = Vec::new();
        for v in [0i16, 32767, -32768] {
            data.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = Vec::new();
        f.extend_from_slice(b"RIFF");
        f.extend_from_slice(&(36u32 + data.len() as u32).to_le_bytes());
        f.extend_from_slice(b"WAVE");
        f.extend_from_slice(b"fmt ");
        f.extend_from_slice(&16u32.to_le_bytes());
        f.extend_from_slice(&1u16.to_le_bytes()); // PCM
        f.extend_from_slice(&1u16.to_le_bytes()); // mono
        f.extend_from_slice(&8000u32.to_le_bytes());
        f.extend_from_slice(&16000u32.to_le_bytes());
        f.extend_from_slice(&2u16.to_le_bytes());
        f.extend_from_slice(&16u16.to_le_bytes());
        f.extend_from_slice(b"data");
        f.extend_from_slice(&(data.len() as u32).to_le_bytes());
        f.extend_from_slice(&data);

        let w = parse_wav(&f).unwrap();
        assert_eq!(w.samples[0], 0.0);
        assert_eq!(w.samples[1], 32767.0 / 32768.0);
        assert!((w.samples[1] - 0.99997).abs() < 1e-4);
        assert_eq!(w.samples[2], -1.0);
    }

    #[test]
    fn stereo_is_downmixed_by_channel_mean() {
        let mut data = Vec::new();
        // One frame: left 0.5, right -0.25 at f32.
        data.extend_from_slice(&0.5f32.to_le_bytes());
        data.extend_from_slice(&(-0.25f32).to_le_bytes());
        let mut f = Vec::new();
        f.extend_from_slice(b"RIFF");
        f.extend_from_slice(&(36u32 + data.len() as u32).to_le_bytes());
        f.extend_from_slice(b"WAVE");
        f.extend_from_slice(b"fmt ");
        f.extend_from_slice(&16u32.to_le_bytes());
        f.extend_from_slice(&3u16.to_le_bytes()); // float
        f.extend_from_slice(&2u16.to_le_bytes()); // stereo
        f.extend_from_slice(&44100u32.to_le_bytes());
        f.extend_from_slice(&352800u32.to_le_bytes());
        f.extend_from_slice(&8u16.to_le_bytes());
        f.extend_from_slice(&32u16.to_le_bytes());
        f.extend_from_slice(b"data");
        f.extend_from_slice(&(data.len() as u32).to_le_bytes());
        f.extend_from_slice(&data);

        let w = parse_wav(&f).unwrap();
        assert_eq!(w.samples, vec![0.125]);
    }

    #[test]
    fn truncated_and_lying_chunks_are_format_errors() {
        let w = noise_f32(64, 3, 8000);
        let good = wav_bytes(&w);
        // Header alone.
        assert!(matches!(parse_wav(&good[..12]), Err(Error::Format(_))));
        // Chunk size pointing past the end of the file. The writer lays out
        // RIFF(12) + fmt(24) + fact(12), putting the data size at byte 52.
        let mut lying = good.clone();
        lying[52..56].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(parse_wav(&lying), Err(Error::Format(_))));
        // Wrong magic.
        let mut bad_magic = good;
        bad_magic[0] = b'X';
        assert!(matches!(parse_wav(&bad_magic), Err(Error::Format(_))));
    }

    #[test]
    fn unknown_chunks_are_skipped() {
        let w = noise_f32(16, 9, 16000);
        let bytes = wav_bytes(&w);
        // Splice an unknown chunk between "WAVE" and "fmt ".
        let mut spliced = bytes[..12].to_vec();
        spliced.extend_from_slice(b"junk");
        spliced.extend_from_slice(&5u32.to_le_bytes());
        spliced.extend_from_slice(&[1, 2, 3, 4, 5, 0]); // odd size + pad byte
        spliced.extend_from_slice(&bytes[12..]);
        let decoded = parse_wav(&spliced).unwrap();
        assert_eq!(decoded.samples, w.samples);
    }

    #[test]
    fn out_of_range_file_samples_are_clipped_on_load() {
        let w = Waveform::new(vec![1.5, -2.0, 0.5], 8000).unwrap();
        let decoded = parse_wav(&wav_bytes(&w)).unwrap();
        assert_eq!(decoded.samples, vec![1.0, -1.0, 0.5]);
    }

    #[test]
    fn file_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.wav");
        let w = noise_f32(4096, 11, 24000);
        save_wav(&path, &w).unwrap();
        let back = load_wav(&path).unwrap();
        assert_eq!(back, w);
    }
}

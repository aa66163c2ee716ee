//! WAV decoding, encoding and canonicalisation to the analysis format.
//!
//! Only RIFF/WAVE with 16-bit integer PCM or 32-bit IEEE float samples is
//! understood. Everything downstream works on [`AudioClip`]s that have been
//! passed through [`canonicalise`]: mono, at the analysis rate, amplitudes in
//! `[-1.0, 1.0]`.

use std::path::Path;

use thiserror::Error;

/// Default analysis rate in Hz.
pub const ANALYSIS_RATE: u32 = 11_025;

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV: {chunk} chunk: {reason}")]
    Malformed { chunk: &'static str, reason: String },
    #[error("unsupported WAV encoding: {0}")]
    Unsupported(String),
    #[error("empty audio input")]
    Empty,
    #[error("invalid sample rate {0}")]
    InvalidRate(u32),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn malformed(chunk: &'static str, reason: impl Into<String>) -> AudioError {
    AudioError::Malformed {
        chunk,
        reason: reason.into(),
    }
}

/// Decoded audio. Samples are stored interleaved when `channels > 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub sample_rate: u32,
    pub channels: u16,
    pub samples: Vec<f32>,
}

impl AudioClip {
    pub fn mono(sample_rate: u32, samples: Vec<f32>) -> Self {
        Self {
            sample_rate,
            channels: 1,
            samples,
        }
    }

    /// Number of samples per channel.
    pub fn frames(&self) -> usize {
        self.samples.len() / self.channels.max(1) as usize
    }

    pub fn duration_s(&self) -> f64 {
        self.frames() as f64 / self.sample_rate as f64
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn channel(&self, index: u16) -> impl Iterator<Item = f32> + '_ {
        self.samples
            .iter()
            .skip(index as usize)
            .step_by(self.channels as usize)
            .copied()
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, chunk: &'static str) -> Result<&'a [u8], AudioError> {
        if self.pos + n > self.bytes.len() {
            return Err(malformed(chunk, "unexpected end of data"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, chunk: &'static str) -> Result<u16, AudioError> {
        let b = self.take(2, chunk)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, chunk: &'static str) -> Result<u32, AudioError> {
        let b = self.take(4, chunk)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

struct FmtChunk {
    format: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk, AudioError> {
    let mut c = Cursor { bytes: body, pos: 0 };
    let mut format = c.u16("fmt")?;
    let channels = c.u16("fmt")?;
    let sample_rate = c.u32("fmt")?;
    let _byte_rate = c.u32("fmt")?;
    let _block_align = c.u16("fmt")?;
    let bits = c.u16("fmt")?;
    if format == FORMAT_EXTENSIBLE {
        let ext_len = c.u16("fmt")?;
        if ext_len < 22 {
            return Err(malformed("fmt", "WAVE_FORMAT_EXTENSIBLE extension too short"));
        }
        let _valid_bits = c.u16("fmt")?;
        let _mask = c.u32("fmt")?;
        // first two bytes of the subformat GUID carry the real format tag
        format = c.u16("fmt")?;
    }
    if channels == 0 {
        return Err(malformed("fmt", "zero channels"));
    }
    if sample_rate == 0 {
        return Err(malformed("fmt", "zero sample rate"));
    }
    Ok(FmtChunk {
        format,
        channels,
        sample_rate,
        bits,
    })
}

/// Decode a RIFF/WAVE byte buffer.
///
/// 16-bit PCM values `v` map to `v / 32768.0`; float samples are clamped to
/// `[-1.0, 1.0]`.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip, AudioError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "RIFF")? != b"RIFF" {
        return Err(malformed("RIFF", "missing RIFF magic"));
    }
    let _riff_len = c.u32("RIFF")?;
    if c.take(4, "RIFF")? != b"WAVE" {
        return Err(malformed("RIFF", "form type is not WAVE"));
    }

    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    while c.pos + 8 <= bytes.len() {
        let id = c.take(4, "chunk header")?;
        let len = c.u32("chunk header")? as usize;
        match id {
            b"fmt " => {
                let body = c.take(len, "fmt")?;
                fmt = Some(parse_fmt(body)?);
            }
            b"data" => {
                // tolerate a truncated final data chunk length
                let avail = (bytes.len() - c.pos).min(len);
                data = Some(c.take(avail, "data")?);
            }
            _ => {
                let avail = (bytes.len() - c.pos).min(len);
                c.take(avail, "chunk header")?;
            }
        }
        if len % 2 == 1 && c.pos < bytes.len() {
            c.pos += 1;
        }
    }

    let fmt = fmt.ok_or_else(|| malformed("fmt", "missing fmt chunk"))?;
    let data = data.ok_or_else(|| malformed("data", "missing data chunk"))?;
    if fmt.channels > 2 {
        return Err(AudioError::Unsupported(format!("{} channels", fmt.channels)));
    }

    let samples: Vec<f32> = match (fmt.format, fmt.bits) {
        (FORMAT_PCM, 16) => {
            if data.len() % (2 * fmt.channels as usize) != 0 {
                return Err(malformed("data", "length is not a whole number of frames"));
            }
            data.chunks_exact(2)
                .map(|b| i16::from_le_bytes([b[0], b[1]]) as f32 / 32768.0)
                .collect()
        }
        (FORMAT_IEEE_FLOAT, 32) => {
            if data.len() % (4 * fmt.channels as usize) != 0 {
                return Err(malformed("data", "length is not a whole number of frames"));
            }
            data.chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .map(|v| if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 })
                .collect()
        }
        (format, bits) => {
            return Err(AudioError::Unsupported(format!(
                "format tag {format:#06x} with {bits} bits per sample"
            )))
        }
    };

    Ok(AudioClip {
        sample_rate: fmt.sample_rate,
        channels: fmt.channels,
        samples,
    })
}

pub fn read_wav(path: &Path) -> Result<AudioClip, AudioError> {
    decode_wav(&std::fs::read(path)?)
}

/// Encode as 16-bit PCM. Amplitudes are clamped, scaled by 32768 and rounded,
/// so a decoded 16-bit file re-encodes to the same bytes.
pub fn encode_wav_pcm16(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.samples.len() * 2;
    let block_align = clip.channels * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&clip.channels.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * block_align as u32).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<(), AudioError> {
    std::fs::write(path, encode_wav_pcm16(clip))?;
    Ok(())
}

/// Mix down to mono by channel mean and resample to `target_rate` with linear
/// interpolation.
///
/// A mono clip already at `target_rate` is returned sample-exact (after
/// clamping), which makes the operation idempotent.
pub fn canonicalise(clip: &AudioClip, target_rate: u32) -> Result<AudioClip, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::InvalidRate(target_rate));
    }
    if clip.sample_rate == 0 {
        return Err(AudioError::InvalidRate(clip.sample_rate));
    }
    if clip.frames() == 0 {
        return Err(AudioError::Empty);
    }

    let channels = clip.channels.max(1) as usize;
    let mono: Vec<f32> = if channels == 1 {
        clip.samples.clone()
    } else {
        clip.samples
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect()
    };

    let resampled = if clip.sample_rate == target_rate {
        mono
    } else {
        resample_linear(&mono, clip.sample_rate, target_rate)
    };

    Ok(AudioClip::mono(
        target_rate,
        resampled.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect(),
    ))
}

fn resample_linear(input: &[f32], from: u32, to: u32) -> Vec<f32> {
    let out_len = ((input.len() as u64 * to as u64 + from as u64 / 2) / from as u64).max(1) as usize;
    let step = from as f64 / to as f64;
    let last = input.len() - 1;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * step;
            let idx = pos.floor() as usize;
            if idx >= last {
                return input[last];
            }
            let frac = (pos - idx as f64) as f32;
            input[idx] + (input[idx + 1] - input[idx]) * frac
        })
        .collect()
}

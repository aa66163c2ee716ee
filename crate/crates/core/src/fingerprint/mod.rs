//! Landmark fingerprints: STFT, spectral peak picking, peak pairing and hash
//! packing.
//!
//! ```text
//! AudioClip ──stft──▶ Spectrogram ──peaks──▶ [Peak] ──pair──▶ [Landmark]
//! ```
//!
//! Every stage is a pure function with lexicographic tie-breaks, so the same
//! samples always produce the same landmark sequence.

mod format;
mod landmark;
mod peaks;
mod stft;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::{AudioClip, ANALYSIS_RATE};

pub use format::{
    read_fingerprint, read_fingerprint_file, write_fingerprint, write_fingerprint_file, FINGERPRINT_MAGIC,
    FINGERPRINT_VERSION,
};
pub use landmark::{hash_landmark, pair_landmarks, HashKey, Landmark, PairingParams, DF_BIAS};
pub use peaks::{extract_peaks, Peak, PeakParams};
pub use stft::{compute_spectrogram, Spectrogram, StftParams};

#[derive(Debug, Error)]
pub enum FingerprintError {
    #[error("clip has {samples} samples, shorter than one {window}-sample window")]
    TooShort { samples: usize, window: usize },
    #[error("clip is not canonical: {0}")]
    NotCanonical(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("landmark field out of packable range: {0}")]
    Range(String),
    #[error("bad fingerprint file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// All knobs of the fingerprinting pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FingerprintParams {
    pub analysis_rate: u32,
    pub stft: StftParams,
    pub peaks: PeakParams,
    pub pairing: PairingParams,
}

impl Default for FingerprintParams {
    fn default() -> Self {
        Self {
            analysis_rate: ANALYSIS_RATE,
            stft: StftParams::default(),
            peaks: PeakParams::default(),
            pairing: PairingParams::default(),
        }
    }
}

impl FingerprintParams {
    pub fn validate(&self) -> Result<(), FingerprintError> {
        self.stft.validate()?;
        self.pairing.validate()?;
        if self.analysis_rate == 0 {
            return Err(FingerprintError::InvalidParams("analysis_rate is zero".into()));
        }
        if self.stft.bins() > 512 {
            return Err(FingerprintError::InvalidParams(format!(
                "{} bins do not fit the 9-bit hash field",
                self.stft.bins()
            )));
        }
        if self.peaks.frame_radius == 0 || self.peaks.bin_radius == 0 {
            return Err(FingerprintError::InvalidParams(
                "peak neighborhood extents must be ≥ 1".into(),
            ));
        }
        Ok(())
    }

    pub fn frame_duration_s(&self) -> f64 {
        self.stft.frame_duration_s(self.analysis_rate)
    }
}

/// A clip's landmark set. `total_landmarks()` is the denominator of the
/// matched-landmark fraction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub sample_id: String,
    pub landmarks: Vec<Landmark>,
}

impl Fingerprint {
    pub fn new(sample_id: impl Into<String>, landmarks: Vec<Landmark>) -> Self {
        Self {
            sample_id: sample_id.into(),
            landmarks,
        }
    }

    pub fn total_landmarks(&self) -> usize {
        self.landmarks.len()
    }

    /// JSON debug dump (same fields as the binary record).
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "sample_id": self.sample_id,
            "total_landmarks": self.total_landmarks(),
            "landmarks": self.landmarks,
        })
    }
}

/// Spectrogram → peaks → landmarks for one canonical clip.
pub fn fingerprint_clip(
    sample_id: impl Into<String>,
    clip: &AudioClip,
    params: &FingerprintParams,
) -> Result<Fingerprint, FingerprintError> {
    params.validate()?;
    if clip.channels != 1 || clip.sample_rate != params.analysis_rate {
        return Err(FingerprintError::NotCanonical(format!(
            "expected mono at {} Hz, got {} channel(s) at {} Hz",
            params.analysis_rate, clip.channels, clip.sample_rate
        )));
    }
    let spec = compute_spectrogram(clip, &params.stft)?;
    let peaks = extract_peaks(&spec, &params.peaks);
    let landmarks = pair_landmarks(&peaks, &params.pairing);
    Ok(Fingerprint::new(sample_id, landmarks))
}

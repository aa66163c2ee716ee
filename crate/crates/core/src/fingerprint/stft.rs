use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::FingerprintError;
use crate::audio_io::AudioClip;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftParams {
    pub window_size: usize,
    pub hop_size: usize,
}

impl Default for StftParams {
    fn default() -> Self {
        Self {
            window_size: 512,
            hop_size: 256,
        }
    }
}

impl StftParams {
    pub fn validate(&self) -> Result<(), FingerprintError> {
        if !self.window_size.is_power_of_two() || self.window_size < 2 {
            return Err(FingerprintError::InvalidParams(format!(
                "window_size {} is not a power of two",
                self.window_size
            )));
        }
        if self.hop_size == 0 || self.hop_size > self.window_size {
            return Err(FingerprintError::InvalidParams(format!(
                "hop_size {} outside 1..={}",
                self.hop_size, self.window_size
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.window_size / 2 + 1
    }

    /// Seconds between consecutive frames.
    pub fn frame_duration_s(&self, rate: u32) -> f64 {
        self.hop_size as f64 / rate as f64
    }
}

/// Row-major `[frame][bin]` grid of `ln(1 + |X|)` magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub magnitudes: Vec<f32>,
    pub frame_duration_s: f64,
    pub bin_width_hz: f64,
}

impl Spectrogram {
    /// Build from explicit rows. Used by tests and by callers that bring
    /// their own time-frequency representation.
    pub fn from_rows(rows: &[Vec<f32>]) -> Self {
        let bins = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == bins), "ragged spectrogram rows");
        Self {
            frames: rows.len(),
            bins,
            magnitudes: rows.concat(),
            frame_duration_s: 1.0,
            bin_width_hz: 1.0,
        }
    }

    #[inline]
    pub fn get(&self, frame: usize, bin: usize) -> f32 {
        self.magnitudes[frame * self.bins + bin]
    }

    pub fn frame(&self, frame: usize) -> &[f32] {
        &self.magnitudes[frame * self.bins..(frame + 1) * self.bins]
    }
}

fn hann(n: usize) -> Vec<f32> {
    (0..n)
        .map(|i| {
            let x = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            (0.5 - 0.5 * x.cos()) as f32
        })
        .collect()
}

/// Frame `f` covers samples `[f * hop, f * hop + window)`; trailing samples
/// that do not fill a window are dropped.
pub fn compute_spectrogram(clip: &AudioClip, params: &StftParams) -> Result<Spectrogram, FingerprintError> {
    params.validate()?;
    if clip.channels != 1 {
        return Err(FingerprintError::NotCanonical(format!("{} channels", clip.channels)));
    }
    let n = clip.samples.len();
    if n < params.window_size {
        return Err(FingerprintError::TooShort {
            samples: n,
            window: params.window_size,
        });
    }

    let frames = 1 + (n - params.window_size) / params.hop_size;
    let bins = params.bins();
    let window = hann(params.window_size);
    let fft = FftPlanner::<f32>::new().plan_fft_forward(params.window_size);
    let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex::default(); params.window_size];
    let mut magnitudes = Vec::with_capacity(frames * bins);

    for f in 0..frames {
        let start = f * params.hop_size;
        for (slot, (&s, &w)) in buf
            .iter_mut()
            .zip(clip.samples[start..start + params.window_size].iter().zip(&window))
        {
            *slot = Complex::new(s * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        magnitudes.extend(buf[..bins].iter().map(|c| c.norm().ln_1p()));
    }

    Ok(Spectrogram {
        frames,
        bins,
        magnitudes,
        frame_duration_s: params.frame_duration_s(clip.sample_rate),
        bin_width_hz: clip.sample_rate as f64 / params.window_size as f64,
    })
}

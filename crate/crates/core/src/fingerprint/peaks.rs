use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::stft::Spectrogram;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakParams {
    /// Neighborhood half-extent in frames.
    pub frame_radius: usize,
    /// Neighborhood half-extent in bins.
    pub bin_radius: usize,
    pub max_per_frame: usize,
    /// Magnitudes at or below this are never peaks.
    pub floor: f32,
}

impl Default for PeakParams {
    fn default() -> Self {
        Self {
            frame_radius: 10,
            bin_radius: 15,
            max_per_frame: 5,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub frame: u32,
    pub bin: u16,
    pub magnitude: f32,
}

/// Centered sliding maximum over `radius` on each side, windows clipped at
/// the edges.
fn sliding_max(input: &[f32], radius: usize, out: &mut Vec<f32>) {
    out.clear();
    let n = input.len();
    let mut deque: VecDeque<usize> = VecDeque::new();
    let mut next = 0;
    for i in 0..n {
        let hi = (i + radius).min(n - 1);
        while next <= hi {
            while deque.back().is_some_and(|&j| input[j] <= input[next]) {
                deque.pop_back();
            }
            deque.push_back(next);
            next += 1;
        }
        let lo = i.saturating_sub(radius);
        while deque.front().is_some_and(|&j| j < lo) {
            deque.pop_front();
        }
        out.push(input[deque[0]]);
    }
}

/// Strict local maxima over the `(2·frame_radius+1) × (2·bin_radius+1)`
/// neighborhood, above `floor`, keeping the `max_per_frame` strongest per
/// frame (ties: lower bin). Output is sorted by `(frame, bin)`.
pub fn extract_peaks(spec: &Spectrogram, params: &PeakParams) -> Vec<Peak> {
    let (frames, bins) = (spec.frames, spec.bins);
    if frames == 0 || bins == 0 || params.max_per_frame == 0 {
        return Vec::new();
    }

    // separable max filter: along bins, then along frames
    let mut row_max = vec![0.0f32; frames * bins];
    let mut tmp = Vec::with_capacity(bins.max(frames));
    for f in 0..frames {
        sliding_max(spec.frame(f), params.bin_radius, &mut tmp);
        row_max[f * bins..(f + 1) * bins].copy_from_slice(&tmp);
    }
    let mut hood_max = vec![0.0f32; frames * bins];
    let mut column = Vec::with_capacity(frames);
    for b in 0..bins {
        column.clear();
        column.extend((0..frames).map(|f| row_max[f * bins + b]));
        sliding_max(&column, params.frame_radius, &mut tmp);
        for (f, &m) in tmp.iter().enumerate() {
            hood_max[f * bins + b] = m;
        }
    }

    let mut peaks = Vec::new();
    let mut frame_peaks: Vec<Peak> = Vec::new();
    for f in 0..frames {
        frame_peaks.clear();
        for b in 0..bins {
            let v = spec.get(f, b);
            if v <= params.floor || v < hood_max[f * bins + b] {
                continue;
            }
            if is_unique_max(spec, f, b, params) {
                frame_peaks.push(Peak {
                    frame: f as u32,
                    bin: b as u16,
                    magnitude: v,
                });
            }
        }
        if frame_peaks.len() > params.max_per_frame {
            frame_peaks.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude).then(a.bin.cmp(&b.bin)));
            frame_peaks.truncate(params.max_per_frame);
            frame_peaks.sort_by_key(|p| p.bin);
        }
        peaks.extend_from_slice(&frame_peaks);
    }
    peaks
}

/// `(f, b)` already equals the neighborhood maximum; reject if any other
/// cell ties it.
fn is_unique_max(spec: &Spectrogram, f: usize, b: usize, params: &PeakParams) -> bool {
    let v = spec.get(f, b);
    let f_lo = f.saturating_sub(params.frame_radius);
    let f_hi = (f + params.frame_radius).min(spec.frames - 1);
    let b_lo = b.saturating_sub(params.bin_radius);
    let b_hi = (b + params.bin_radius).min(spec.bins - 1);
    for ff in f_lo..=f_hi {
        let row = spec.frame(ff);
        for (bb, &w) in row[b_lo..=b_hi].iter().enumerate() {
            if w >= v && !(ff == f && b_lo + bb == b) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(fr: usize, br: usize, max: usize) -> PeakParams {
        PeakParams {
            frame_radius: fr,
            bin_radius: br,
            max_per_frame: max,
            floor: 1e-6,
        }
    }

    #[test]
    fn single_nonzero_cell() {
        let mut rows = vec![vec![0.0f32; 12]; 9];
        rows[4][7] = 2.5;
        let peaks = extract_peaks(&Spectrogram::from_rows(&rows), &PeakParams::default());
        assert_eq!(
            peaks,
            vec![Peak {
                frame: 4,
                bin: 7,
                magnitude: 2.5
            }]
        );
    }

    #[test]
    fn constant_grid_has_no_strict_maxima() {
        let rows = vec![vec![1.0f32; 20]; 20];
        assert!(extract_peaks(&Spectrogram::from_rows(&rows), &params(2, 2, 5)).is_empty());
    }

    #[test]
    fn empty_spectrogram() {
        assert!(extract_peaks(&Spectrogram::from_rows(&[]), &PeakParams::default()).is_empty());
    }

    #[test]
    fn per_frame_cap_keeps_strongest() {
        // isolated spikes in one frame, spaced beyond the bin radius
        let mut rows = vec![vec![0.0f32; 40]; 3];
        for (i, b) in [2usize, 10, 18, 26, 34].iter().enumerate() {
            rows[1][*b] = 1.0 + i as f32;
        }
        let peaks = extract_peaks(&Spectrogram::from_rows(&rows), &params(1, 3, 2));
        let bins: Vec<u16> = peaks.iter().map(|p| p.bin).collect();
        assert_eq!(bins, vec![26, 34]);
    }

    #[test]
    fn sliding_max_matches_naive() {
        let input = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0];
        for r in 0..5 {
            let mut out = Vec::new();
            sliding_max(&input, r, &mut out);
            assert_eq!(out.len(), input.len());
            for (i, &got) in out.iter().enumerate() {
                let lo = i.saturating_sub(r);
                let hi = (i + r).min(input.len() - 1);
                let m = input[lo..=hi].iter().copied().fold(f32::MIN, f32::max);
                assert_eq!(got, m);
            }
        }
    }
}

use serde::{Deserialize, Serialize};

use super::peaks::Peak;
use super::FingerprintError;

/// Frequency-offset bias used when packing `f2 - f1` into an unsigned field.
pub const DF_BIAS: i32 = 31;
pub const MAX_PACKED_BIN: u16 = 511;
pub const MAX_PACKED_DT: u16 = 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingParams {
    pub fan_out: usize,
    /// Largest admissible frame gap between anchor and target.
    pub dt_max: u16,
    /// Largest admissible absolute bin gap.
    pub df_max: u16,
}

impl Default for PairingParams {
    fn default() -> Self {
        Self {
            fan_out: 3,
            dt_max: 63,
            df_max: 31,
        }
    }
}

impl PairingParams {
    pub fn validate(&self) -> Result<(), FingerprintError> {
        if self.dt_max == 0 || self.dt_max > MAX_PACKED_DT {
            return Err(FingerprintError::InvalidParams(format!(
                "dt_max {} outside 1..=63",
                self.dt_max
            )));
        }
        if self.df_max as i32 > DF_BIAS {
            return Err(FingerprintError::InvalidParams(format!(
                "df_max {} exceeds 31",
                self.df_max
            )));
        }
        Ok(())
    }
}

/// A pair of spectral peaks: anchor bin `f1` at frame `t1`, target bin `f2`
/// at frame `t1 + dt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Landmark {
    pub f1: u16,
    pub f2: u16,
    pub t1: u32,
    pub dt: u16,
}

/// Packed `(f1, f2 - f1, dt)`; time-independent, so identical landmarks at
/// different times share a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HashKey(pub u32);

/// Pack `f1` (9 bits) | `f2 - f1 + 31` (6 bits) | `dt` (6 bits).
pub fn hash_landmark(lm: &Landmark) -> Result<HashKey, FingerprintError> {
    let df = lm.f2 as i32 - lm.f1 as i32;
    if lm.f1 > MAX_PACKED_BIN || lm.f2 > MAX_PACKED_BIN {
        return Err(FingerprintError::Range(format!("bin {}/{} exceeds 511", lm.f1, lm.f2)));
    }
    if df.abs() > DF_BIAS {
        return Err(FingerprintError::Range(format!("bin offset {df} exceeds ±31")));
    }
    if lm.dt == 0 || lm.dt > MAX_PACKED_DT {
        return Err(FingerprintError::Range(format!("dt {} outside 1..=63", lm.dt)));
    }
    Ok(HashKey(
        ((lm.f1 as u32) << 12) | (((df + DF_BIAS) as u32) << 6) | lm.dt as u32,
    ))
}

/// Pair each anchor with up to `fan_out` later peaks inside the target zone
/// `1 ≤ Δframe ≤ dt_max, |Δbin| ≤ df_max`.
///
/// Targets are taken nearest-in-time first, then smaller `|Δbin|`, then
/// smaller bin. Output is grouped by anchor in input order, targets in
/// selection order. `peaks` must be sorted by `(frame, bin)`.
pub fn pair_landmarks(peaks: &[Peak], params: &PairingParams) -> Vec<Landmark> {
    let mut out = Vec::with_capacity(peaks.len() * params.fan_out);
    let mut frame_targets: Vec<&Peak> = Vec::new();
    for (i, anchor) in peaks.iter().enumerate() {
        let mut taken = 0;
        let mut j = i + 1;
        // skip same-frame peaks
        while j < peaks.len() && peaks[j].frame == anchor.frame {
            j += 1;
        }
        while taken < params.fan_out && j < peaks.len() {
            let frame = peaks[j].frame;
            let dt = frame - anchor.frame;
            if dt > params.dt_max as u32 {
                break;
            }
            frame_targets.clear();
            while j < peaks.len() && peaks[j].frame == frame {
                if anchor.bin.abs_diff(peaks[j].bin) <= params.df_max {
                    frame_targets.push(&peaks[j]);
                }
                j += 1;
            }
            frame_targets.sort_by_key(|p| (anchor.bin.abs_diff(p.bin), p.bin));
            for target in frame_targets.iter().take(params.fan_out - taken) {
                out.push(Landmark {
                    f1: anchor.bin,
                    f2: target.bin,
                    t1: anchor.frame,
                    dt: dt as u16,
                });
                taken += 1;
            }
        }
    }
    out
}

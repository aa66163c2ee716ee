//! Deterministic synthetic concert corpus with ground truth.
//!
//! Each song is a seeded random walk over a pentatonic scale with a
//! song-specific root, rendered as decaying four-harmonic notes over a quiet
//! noise bed. Every song yields one clean reference recording covering the
//! span of all its user clips, plus user clips that are noisy, gain-scaled
//! crops. All crops of a song contain a shared core window, so every pair
//! overlaps by at least `min_overlap_s`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::{write_wav, AudioClip, AudioError, ANALYSIS_RATE};
use crate::fingerprint::{fingerprint_clip, Fingerprint, FingerprintParams};
use crate::match_db::{MatchDb, OffsetGroup, RawMatchingList};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("crop [{start:.3}, {end:.3}) s lies outside the {duration:.3} s source")]
    CropOutOfBounds { start: f64, end: f64, duration: f64 },
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("manifest error: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub seed: u64,
    pub n_songs: usize,
    pub song_duration_s: f64,
    /// Clips per song including the reference, inclusive range.
    pub clips_per_song: (usize, usize),
    /// User clip lengths in seconds.
    pub crop_length_s: (f64, f64),
    pub snr_db: (f64, f64),
    pub reference_snr_db: f64,
    pub gain: (f64, f64),
    pub min_overlap_s: f64,
    /// Songs sharing this many landmarks at one offset are redrawn.
    #[serde(default = "default_isolation_t_l")]
    pub isolation_t_l: u32,
}

fn default_isolation_t_l() -> u32 {
    5
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            seed: 2017,
            n_songs: 10,
            song_duration_s: 240.0,
            clips_per_song: (5, 9),
            crop_length_s: (30.0, 90.0),
            snr_db: (5.0, 25.0),
            reference_snr_db: 60.0,
            gain: (0.5, 1.0),
            min_overlap_s: 10.0,
            isolation_t_l: 5,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::InvalidSpec(m.to_string()));
        if self.isolation_t_l == 0 {
            return bad("isolation_t_l must be ≥ 1");
        }
        if self.n_songs == 0 {
            return bad("n_songs must be ≥ 1");
        }
        if self.song_duration_s < 30.0 {
            return bad("song_duration_s must be ≥ 30");
        }
        if self.clips_per_song.0 < 2 || self.clips_per_song.0 > self.clips_per_song.1 {
            return bad("clips_per_song must be a non-empty range with minimum ≥ 2");
        }
        let (lo, hi) = self.crop_length_s;
        if !(lo > 0.0 && lo <= hi && hi <= self.song_duration_s) {
            return bad("crop_length_s must be a non-empty range within the song duration");
        }
        if !(self.min_overlap_s >= 0.0 && self.min_overlap_s <= lo) {
            return bad("min_overlap_s must be within [0, shortest crop]");
        }
        if self.snr_db.0 > self.snr_db.1 || !self.snr_db.0.is_finite() {
            return bad("snr_db must be a non-empty finite range");
        }
        if self.reference_snr_db < 40.0 {
            return bad("reference_snr_db must be ≥ 40");
        }
        if !(self.gain.0 > 0.0 && self.gain.0 <= self.gain.1) {
            return bad("gain must be a non-empty positive range");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipTruth {
    pub clip_id: String,
    pub song_id: usize,
    pub crop_start_s: f64,
    pub crop_length_s: f64,
    pub snr_db: f64,
    pub gain: f64,
    pub is_reference: bool,
}

impl ClipTruth {
    pub fn crop_end_s(&self) -> f64 {
        self.crop_start_s + self.crop_length_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FpKind {
    SampleLevel,
    LandmarkLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectedFp {
    pub query_id: String,
    pub phantom_candidate_id: String,
    pub kind: FpKind,
    pub l: u32,
    pub offset_frames: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedInjection {
    pub query_id: String,
    pub kind: FpKind,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthManifest {
    pub schema_version: u32,
    pub sample_rate: u32,
    pub spec: CorpusSpec,
    pub clips: Vec<ClipTruth>,
    /// Song draws rejected because they collided with an earlier song.
    #[serde(default)]
    pub song_redraws: usize,
    /// Clip noise draws rejected because the clip collided with another song.
    #[serde(default)]
    pub clip_redraws: usize,
    #[serde(default)]
    pub injected: Vec<InjectedFp>,
    #[serde(default)]
    pub skipped_injections: Vec<SkippedInjection>,
}

impl GroundTruthManifest {
    pub fn clip(&self, id: &str) -> Option<&ClipTruth> {
        self.clips.iter().find(|c| c.clip_id == id)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let m: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        if m.schema_version != MANIFEST_VERSION {
            return Err(CorpusError::InvalidSpec(format!(
                "manifest schema version {} (expected {MANIFEST_VERSION})",
                m.schema_version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

/// splitmix64 over `(seed, stream, index)`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const PENTATONIC: [f64; 5] = [0.0, 2.0, 4.0, 7.0, 9.0];
const SCALE_STEPS: i32 = 12;
const PEAK_LEVEL: f32 = 0.5;
const TEXTURE_LEVEL: f32 = 0.01;

/// Render one pseudo-musical song at the analysis rate.
pub fn generate_song(seed: u64, duration_s: f64) -> AudioClip {
    let rate = ANALYSIS_RATE as f64;
    let n = (duration_s * rate).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let root = 400.0 * 2f64.powf(rng.gen_range(0.0..1.0));
    let nyquist_guard = 0.45 * rate;
    let mut out = vec![0.0f32; n];
    // per-song pitch set: pentatonic steps, each detuned by up to ±40 cents
    let pitches: Vec<f64> = (0..SCALE_STEPS)
        .map(|step| {
            let octave = step / PENTATONIC.len() as i32;
            let degree = PENTATONIC[(step % PENTATONIC.len() as i32) as usize];
            let cents = rng.gen_range(-40.0..40.0);
            root * 2f64.powf(octave as f64 + (degree + cents / 100.0) / 12.0)
        })
        .collect();
    // stretched partials f_k = k·f·sqrt(1 + B·k²), B per song
    let inharmonicity = rng.gen_range(0.01..0.06);
    let partials: Vec<f64> = (1..=4)
        .map(|k| k as f64 * (1.0 + inharmonicity * (k * k) as f64).sqrt())
        .collect();

    let mut step: i32 = rng.gen_range(0..SCALE_STEPS);
    let mut start = 0usize;
    while start < n {
        let len = (rng.gen_range(0.2..0.8) * rate) as usize;
        let freq = pitches[step as usize];
        let velocity = rng.gen_range(0.6..1.0);
        let decay = rng.gen_range(0.15..0.4) * len as f64 / rate;
        let end = (start + len).min(n);
        for (i, slot) in out[start..end].iter_mut().enumerate() {
            let t = i as f64 / rate;
            let attack = (t / 0.005).min(1.0);
            let env = velocity * attack * (-t / decay).exp();
            let mut v = 0.0;
            for (k, ratio) in partials.iter().enumerate() {
                let f = freq * ratio;
                if f < nyquist_guard {
                    v += (2.0 * std::f64::consts::PI * f * t).sin() / (k + 1) as f64;
                }
            }
            *slot += (env * v) as f32;
        }
        start = end;
        // never repeat a pitch; reflect at the ends of the range
        let jump = rng.gen_range(1..=3) * if rng.gen_bool(0.5) { 1 } else { -1 };
        step += jump;
        if !(0..SCALE_STEPS).contains(&step) {
            step -= 2 * jump;
        }
    }

    let peak = out.iter().fold(0.0f32, |m, v| m.max(v.abs())).max(1e-9);
    for v in &mut out {
        let texture: f32 = StandardNormal.sample(&mut rng);
        *v = *v / peak * PEAK_LEVEL + texture * TEXTURE_LEVEL;
    }
    AudioClip::mono(ANALYSIS_RATE, out)
}

fn rms(x: &[f32]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|&v| v as f64 * v as f64).sum::<f64>() / x.len() as f64).sqrt()
}

/// Crop, scale by `gain`, add white noise at `snr_db` relative to the
/// scaled crop's RMS, clamp. `snr_db = +∞` adds no noise.
pub fn derive_clip(
    song: &AudioClip,
    crop_start_s: f64,
    crop_length_s: f64,
    snr_db: f64,
    gain: f64,
    seed: u64,
) -> Result<AudioClip, CorpusError> {
    let rate = song.sample_rate as f64;
    let start = (crop_start_s * rate).round();
    let len = (crop_length_s * rate).round();
    if crop_start_s < 0.0 || crop_length_s <= 0.0 || start + len > song.samples.len() as f64 {
        return Err(CorpusError::CropOutOfBounds {
            start: crop_start_s,
            end: crop_start_s + crop_length_s,
            duration: song.duration_s(),
        });
    }
    let (start, len) = (start as usize, len as usize);
    let mut out: Vec<f32> = song.samples[start..start + len]
        .iter()
        .map(|&v| (v as f64 * gain) as f32)
        .collect();
    if snr_db.is_finite() {
        let target = rms(&out) / 10f64.powf(snr_db / 20.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise: Vec<f32> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
        let scale = if rms(&noise) > 0.0 { target / rms(&noise) } else { 0.0 };
        for (v, n) in out.iter_mut().zip(&noise) {
            *v += (*n as f64 * scale) as f32;
        }
    }
    for v in &mut out {
        *v = v.clamp(-1.0, 1.0);
    }
    Ok(AudioClip::mono(song.sample_rate, out))
}

pub struct Corpus {
    /// `(clip_id, audio)` sorted by id.
    pub clips: Vec<(String, AudioClip)>,
    pub manifest: GroundTruthManifest,
}

struct ClipPlan {
    song: usize,
    start: f64,
    length: f64,
    snr: f64,
    gain: f64,
    is_reference: bool,
}

fn plan_song(spec: &CorpusSpec, song: usize) -> Vec<ClipPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 1, song as u64));
    let n_clips = rng.gen_range(spec.clips_per_song.0..=spec.clips_per_song.1);
    let dur = spec.song_duration_s;
    let ovl = spec.min_overlap_s;
    // shared core window [core, core + ovl] that every crop contains
    let core_lo = spec.crop_length_s.1.min(dur - ovl);
    let core_hi = (dur - spec.crop_length_s.1 - ovl).max(core_lo);
    let core = if core_hi > core_lo {
        rng.gen_range(core_lo..core_hi)
    } else {
        core_lo
    };
    let core = core.min(dur - ovl).max(0.0);

    let mut plans = Vec::with_capacity(n_clips);
    for _ in 0..n_clips - 1 {
        let length = rng.gen_range(spec.crop_length_s.0..=spec.crop_length_s.1);
        let lo = (core + ovl - length).max(0.0);
        let hi = core.min(dur - length);
        let start = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        plans.push(ClipPlan {
            song,
            start,
            length,
            snr: rng.gen_range(spec.snr_db.0..=spec.snr_db.1),
            gain: rng.gen_range(spec.gain.0..=spec.gain.1),
            is_reference: false,
        });
    }
    let start = plans.iter().map(|p| p.start).fold(f64::INFINITY, f64::min);
    let end = plans.iter().map(|p| p.start + p.length).fold(0.0, f64::max);
    plans.push(ClipPlan {
        song,
        start,
        length: end - start,
        snr: spec.reference_snr_db,
        gain: rng.gen_range(spec.gain.0..=spec.gain.1),
        is_reference: true,
    });
    plans
}

/// Build the full corpus in memory. Songs render in parallel; the result
/// depends only on `spec`.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus, CorpusError> {
    spec.validate()?;
    let plans: Vec<ClipPlan> = (0..spec.n_songs).flat_map(|s| plan_song(spec, s)).collect();
    let mut ids: Vec<usize> = (0..plans.len()).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 2, 0)));
    let width = plans.len().to_string().len().max(3);
    let clip_ids: Vec<String> = ids.iter().map(|i| format!("clip_{i:0width$}")).collect();

    let (songs, song_redraws) = generate_isolated_songs(spec)?;
    let render = |i: usize, attempt: u64| {
        let p = &plans[i];
        let seed = match attempt {
            0 => derive_seed(spec.seed, 3, i as u64),
            a => derive_seed(spec.seed, 4, i as u64 * MAX_CLIP_DRAWS + a),
        };
        derive_clip(&songs[p.song], p.start, p.length, p.snr, p.gain, seed)
    };
    let mut audio: Vec<AudioClip> = (0..plans.len())
        .into_par_iter()
        .map(|i| render(i, 0))
        .collect::<Result<_, _>>()?;
    let clip_redraws = isolate_clips(spec, &plans, &mut audio, render)?;

    let mut clips: Vec<(String, AudioClip)> = clip_ids.iter().cloned().zip(audio).collect();
    let mut truths: Vec<ClipTruth> = plans
        .iter()
        .zip(&clip_ids)
        .map(|(p, id)| ClipTruth {
            clip_id: id.clone(),
            song_id: p.song,
            crop_start_s: p.start,
            crop_length_s: p.length,
            snr_db: p.snr,
            gain: p.gain,
            is_reference: p.is_reference,
        })
        .collect();
    clips.sort_by(|a, b| a.0.cmp(&b.0));
    truths.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    Ok(Corpus {
        clips,
        manifest: GroundTruthManifest {
            schema_version: MANIFEST_VERSION,
            sample_rate: ANALYSIS_RATE,
            spec: spec.clone(),
            clips: truths,
            song_redraws,
            clip_redraws,
            injected: Vec::new(),
            skipped_injections: Vec::new(),
        },
    })
}

/// Noise draws per clip before giving up on isolation.
const MAX_CLIP_DRAWS: u64 = 32;

/// Redraw clip noise until no two clips of different songs share
/// `isolation_t_l` landmarks at one offset. Only user clips are redrawn
/// unless both sides of a collision are references.
fn isolate_clips<F>(
    spec: &CorpusSpec,
    plans: &[ClipPlan],
    audio: &mut [AudioClip],
    render: F,
) -> Result<usize, CorpusError>
where
    F: Fn(usize, u64) -> Result<AudioClip, CorpusError> + Sync,
{
    let params = FingerprintParams::default();
    let fp_err = |e: crate::fingerprint::FingerprintError| CorpusError::InvalidSpec(e.to_string());
    let mut fps: Vec<Fingerprint> = audio
        .par_iter()
        .enumerate()
        .map(|(i, a)| fingerprint_clip(i.to_string(), a, &params))
        .collect::<Result<_, _>>()
        .map_err(fp_err)?;
    let mut attempts = vec![0u64; plans.len()];
    let mut redraws = 0;
    loop {
        let mut db = MatchDb::new();
        for fp in &fps {
            db.insert(fp.clone())
                .map_err(|e| CorpusError::InvalidSpec(e.to_string()))?;
        }
        let raws = db
            .query_all(spec.isolation_t_l)
            .map_err(|e| CorpusError::InvalidSpec(e.to_string()))?;
        let mut offenders = BTreeSet::new();
        for (q, raw) in raws.iter().enumerate() {
            for g in &raw.groups {
                let c = g.candidate_index;
                if plans[q].song == plans[c].song {
                    continue;
                }
                let victim = match (plans[q].is_reference, plans[c].is_reference) {
                    (true, false) => c,
                    (false, true) => q,
                    _ => q.max(c),
                };
                offenders.insert(victim);
            }
        }
        if offenders.is_empty() {
            return Ok(redraws);
        }
        for &i in &offenders {
            attempts[i] += 1;
            if attempts[i] >= MAX_CLIP_DRAWS {
                return Err(CorpusError::InvalidSpec(format!(
                    "clip {i} still collides with another song after {MAX_CLIP_DRAWS} noise draws"
                )));
            }
            redraws += 1;
        }
        let fresh: Vec<(usize, AudioClip, Fingerprint)> = offenders
            .par_iter()
            .map(|&i| {
                let a = render(i, attempts[i])?;
                let fp = fingerprint_clip(i.to_string(), &a, &params).map_err(fp_err)?;
                Ok((i, a, fp))
            })
            .collect::<Result<_, CorpusError>>()?;
        for (i, a, fp) in fresh {
            audio[i] = a;
            fps[i] = fp;
        }
    }
}

/// Attempts per song before giving up on isolation.
const MAX_SONG_DRAWS: u64 = 64;

/// Render songs in order, redrawing any song whose fingerprint shares
/// `isolation_t_l` landmarks at one offset with an already accepted song.
/// Returns the songs and the number of redraws.
fn generate_isolated_songs(spec: &CorpusSpec) -> Result<(Vec<AudioClip>, usize), CorpusError> {
    let params = FingerprintParams::default();
    let draw = |s: usize, attempt: u64| -> Result<(AudioClip, Fingerprint), CorpusError> {
        let song = generate_song(
            derive_seed(spec.seed, 0, s as u64 * MAX_SONG_DRAWS + attempt),
            spec.song_duration_s,
        );
        let fp = fingerprint_clip(format!("song{s}"), &song, &params)
            .map_err(|e| CorpusError::InvalidSpec(e.to_string()))?;
        Ok((song, fp))
    };
    // first draws render in parallel; checking stays sequential so the
    // outcome does not depend on scheduling
    let first: Vec<(AudioClip, Fingerprint)> = (0..spec.n_songs)
        .into_par_iter()
        .map(|s| draw(s, 0))
        .collect::<Result<_, _>>()?;
    let mut db = MatchDb::new();
    let mut songs = Vec::with_capacity(spec.n_songs);
    let mut redraws = 0;
    for (s, candidate) in first.into_iter().enumerate() {
        let mut current = candidate;
        let mut attempt = 0;
        loop {
            let hits = db
                .query(&current.1, spec.isolation_t_l)
                .map_err(|e| CorpusError::InvalidSpec(e.to_string()))?;
            if hits.groups.is_empty() {
                break;
            }
            attempt += 1;
            redraws += 1;
            if attempt >= MAX_SONG_DRAWS {
                return Err(CorpusError::InvalidSpec(format!(
                    "no isolated draw for song {s} after {MAX_SONG_DRAWS} attempts"
                )));
            }
            current = draw(s, attempt)?;
        }
        let (song, fp) = current;
        db.insert(fp).map_err(|e| CorpusError::InvalidSpec(e.to_string()))?;
        songs.push(song);
    }
    Ok((songs, redraws))
}

/// Write `<clip_id>.wav` files (16-bit PCM) and `manifest.json` into `dir`.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<(), CorpusError> {
    std::fs::create_dir_all(dir)?;
    for (id, clip) in &corpus.clips {
        write_wav(&dir.join(format!("{id}.wav")), clip)?;
    }
    corpus.manifest.save(&dir.join("manifest.json"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectionSpec {
    pub seed: u64,
    pub sample_level: usize,
    pub landmark_level: usize,
    pub t_l: u32,
    /// Required gap below the query's weakest true candidate.
    pub min_p_gap: f64,
}

impl Default for InjectionSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            sample_level: 4,
            landmark_level: 5,
            t_l: 5,
            min_p_gap: 0.05,
        }
    }
}

fn sort_groups(groups: &mut [OffsetGroup]) {
    groups.sort_by(|a, b| {
        b.l.cmp(&a.l)
            .then(a.candidate_index.cmp(&b.candidate_index))
            .then(a.offset_frames.cmp(&b.offset_frames))
    });
}

/// Plant false matches into raw matching lists and record them in the
/// manifest.
///
/// Sample-level: a cross-song candidate with `l ∈ [t_l, t_l + 3]` whose
/// match fraction sits at least `min_p_gap` below the weakest existing
/// candidate of the query. Phantom pairs use disjoint song pairs where
/// possible so each one bridges two otherwise separate clusters.
///
/// Landmark-level: an existing candidate repeated at a different offset
/// with strictly smaller `l`.
///
/// `ids` are the database sample ids in insertion order (matching
/// `candidate_index`), `totals` their landmark counts.
pub fn inject_false_positives(
    raws: &mut [RawMatchingList],
    manifest: &mut GroundTruthManifest,
    ids: &[String],
    totals: &[usize],
    spec: &InjectionSpec,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let song_of = |id: &str| manifest.clip(id).map(|c| c.song_id);
    let mut order: Vec<usize> = (0..raws.len()).collect();
    order.shuffle(&mut rng);

    let mut injected = Vec::new();
    let mut skipped = Vec::new();
    let mut used_songs: BTreeSet<usize> = BTreeSet::new();
    let mut used_queries: BTreeSet<usize> = BTreeSet::new();

    for &qi in &order {
        if injected.len() >= spec.sample_level {
            break;
        }
        let query_id = raws[qi].query_id.clone();
        let Some(q_song) = song_of(&query_id) else { continue };
        if used_songs.contains(&q_song) {
            continue;
        }
        // weakest candidate p at its best offset
        let mut best_l: BTreeMap<usize, u32> = BTreeMap::new();
        for g in &raws[qi].groups {
            let e = best_l.entry(g.candidate_index).or_insert(0);
            *e = (*e).max(g.l);
        }
        let min_true_p = best_l
            .iter()
            .map(|(&c, &l)| l as f64 / totals[c].max(1) as f64)
            .fold(f64::INFINITY, f64::min);
        if !min_true_p.is_finite() {
            skipped.push(SkippedInjection {
                query_id,
                kind: FpKind::SampleLevel,
                reason: "empty matching list".into(),
            });
            continue;
        }
        let mut phantoms: Vec<usize> = (0..ids.len())
            .filter(|&c| song_of(&ids[c]).is_some_and(|s| s != q_song && !used_songs.contains(&s)))
            .collect();
        phantoms.shuffle(&mut rng);
        let l = rng.gen_range(spec.t_l..=spec.t_l + 3);
        let Some(&phantom) = phantoms
            .iter()
            .find(|&&c| (l as f64 / totals[c].max(1) as f64) <= min_true_p - spec.min_p_gap)
        else {
            skipped.push(SkippedInjection {
                query_id,
                kind: FpKind::SampleLevel,
                reason: format!("no phantom fits {} below min p {min_true_p:.4}", spec.min_p_gap),
            });
            continue;
        };
        let offset_frames = rng.gen_range(-2000..=2000);
        raws[qi].groups.push(OffsetGroup {
            candidate_id: ids[phantom].clone(),
            candidate_index: phantom,
            offset_frames,
            l,
        });
        sort_groups(&mut raws[qi].groups);
        used_songs.insert(q_song);
        if let Some(s) = song_of(&ids[phantom]) {
            used_songs.insert(s);
        }
        used_queries.insert(qi);
        injected.push(InjectedFp {
            query_id,
            phantom_candidate_id: ids[phantom].clone(),
            kind: FpKind::SampleLevel,
            l,
            offset_frames,
        });
    }
    if injected.len() < spec.sample_level && used_songs.len() + 1 >= manifest.spec.n_songs {
        log::warn!("not enough songs for disjoint sample-level injections");
    }

    let mut landmark_count = 0;
    for &qi in &order {
        if landmark_count >= spec.landmark_level {
            break;
        }
        if used_queries.contains(&qi) {
            continue;
        }
        let eligible: Vec<usize> = (0..raws[qi].groups.len())
            .filter(|&g| raws[qi].groups[g].l > spec.t_l)
            .collect();
        let Some(&gi) = eligible.choose(&mut rng) else {
            skipped.push(SkippedInjection {
                query_id: raws[qi].query_id.clone(),
                kind: FpKind::LandmarkLevel,
                reason: "no candidate with l above t_l".into(),
            });
            continue;
        };
        let original = raws[qi].groups[gi].clone();
        let taken: BTreeSet<i64> = raws[qi]
            .groups
            .iter()
            .filter(|g| g.candidate_index == original.candidate_index)
            .map(|g| g.offset_frames)
            .collect();
        let offset_frames = loop {
            let shift = rng.gen_range(50..=500) * if rng.gen_bool(0.5) { 1 } else { -1 };
            if !taken.contains(&(original.offset_frames + shift)) {
                break original.offset_frames + shift;
            }
        };
        let l = rng.gen_range(spec.t_l..original.l);
        raws[qi].groups.push(OffsetGroup {
            offset_frames,
            l,
            ..original.clone()
        });
        sort_groups(&mut raws[qi].groups);
        used_queries.insert(qi);
        landmark_count += 1;
        injected.push(InjectedFp {
            query_id: raws[qi].query_id.clone(),
            phantom_candidate_id: original.candidate_id,
            kind: FpKind::LandmarkLevel,
            l,
            offset_frames,
        });
    }

    manifest.injected.extend(injected);
    manifest.skipped_injections.extend(skipped);
}

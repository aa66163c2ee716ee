//! In-memory inverted index from landmark hash to `(sample, t1)` postings.
//!
//! A query counts hash collisions per `(candidate, query.t1 - candidate.t1)`
//! bucket; any bucket holding at least `t_l` collisions is a match at that
//! time offset. One candidate may show up under several offsets; sorting
//! that out is the job of [`crate::filtering`].

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::{
    hash_landmark, read_fingerprint, write_fingerprint, Fingerprint, FingerprintError, HashKey, StftParams,
};

pub const DB_MAGIC: &[u8; 4] = b"CLDB";
pub const DB_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum DbError {
    #[error("sample id {0:?} is already in the database")]
    DuplicateId(String),
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
    #[error("bad database file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Posting {
    sample: u32,
    t1: u32,
}

#[derive(Debug, Default, Clone)]
pub struct MatchDb {
    index: HashMap<HashKey, Vec<Posting>>,
    fingerprints: Vec<Fingerprint>,
    ids: HashMap<String, usize>,
}

/// Matching landmarks between a query and one candidate at one offset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffsetGroup {
    pub candidate_id: String,
    /// Candidate position in database insertion order.
    pub candidate_index: usize,
    /// `query.t1 - candidate.t1` in frames.
    pub offset_frames: i64,
    pub l: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawMatchingList {
    pub query_id: String,
    pub groups: Vec<OffsetGroup>,
}

/// Offset in seconds: `offset_frames * hop / rate`.
pub fn offset_seconds(offset_frames: i64, stft: &StftParams, rate: u32) -> f64 {
    offset_frames as f64 * stft.hop_size as f64 / rate as f64
}

impl OffsetGroup {
    pub fn offset_seconds(&self, stft: &StftParams, rate: u32) -> f64 {
        offset_seconds(self.offset_frames, stft, rate)
    }
}

/// Landmarks as unique `(hash, t1)` pairs, first occurrence kept.
fn unique_keys(fp: &Fingerprint) -> Result<Vec<(HashKey, u32)>, FingerprintError> {
    let mut seen = HashSet::with_capacity(fp.landmarks.len());
    let mut out = Vec::with_capacity(fp.landmarks.len());
    for lm in &fp.landmarks {
        let key = (hash_landmark(lm)?, lm.t1);
        if seen.insert(key) {
            out.push(key);
        }
    }
    Ok(out)
}

impl MatchDb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.fingerprints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fingerprints.is_empty()
    }

    /// Total postings across all hash keys.
    pub fn index_entries(&self) -> usize {
        self.index.values().map(Vec::len).sum()
    }

    /// Fingerprints in insertion order.
    pub fn fingerprints(&self) -> &[Fingerprint] {
        &self.fingerprints
    }

    pub fn get(&self, sample_id: &str) -> Option<&Fingerprint> {
        self.ids.get(sample_id).map(|&i| &self.fingerprints[i])
    }

    pub fn position(&self, sample_id: &str) -> Option<usize> {
        self.ids.get(sample_id).copied()
    }

    /// Index every landmark of `fp`. Repeated `(hash, t1)` pairs are stored
    /// once, and the stored fingerprint is deduplicated to match.
    pub fn insert(&mut self, fp: Fingerprint) -> Result<(), DbError> {
        if self.ids.contains_key(&fp.sample_id) {
            return Err(DbError::DuplicateId(fp.sample_id));
        }
        let sample = self.fingerprints.len() as u32;
        let mut seen = HashSet::with_capacity(fp.landmarks.len());
        let mut kept = Vec::with_capacity(fp.landmarks.len());
        let mut postings = Vec::with_capacity(fp.landmarks.len());
        for lm in &fp.landmarks {
            let key = hash_landmark(lm)?;
            if seen.insert((key, lm.t1)) {
                kept.push(*lm);
                postings.push((key, lm.t1));
            }
        }
        for (key, t1) in postings {
            self.index.entry(key).or_default().push(Posting { sample, t1 });
        }
        self.ids.insert(fp.sample_id.clone(), sample as usize);
        self.fingerprints.push(Fingerprint::new(fp.sample_id, kept));
        Ok(())
    }

    /// All `(candidate, offset)` buckets with `l ≥ t_l`, excluding the
    /// query's own id. Sorted by `l` descending, then candidate insertion
    /// order, then offset ascending.
    pub fn query(&self, fp: &Fingerprint, t_l: u32) -> Result<RawMatchingList, DbError> {
        let own = self.ids.get(&fp.sample_id).map(|&i| i as u32);
        let mut counts: HashMap<(u32, i64), u32> = HashMap::new();
        for (key, t1) in unique_keys(fp)? {
            let Some(postings) = self.index.get(&key) else {
                continue;
            };
            for p in postings {
                if Some(p.sample) == own {
                    continue;
                }
                *counts.entry((p.sample, t1 as i64 - p.t1 as i64)).or_insert(0) += 1;
            }
        }
        let mut groups: Vec<OffsetGroup> = counts
            .into_iter()
            .filter(|&(_, l)| l >= t_l.max(1))
            .map(|((sample, offset_frames), l)| OffsetGroup {
                candidate_id: self.fingerprints[sample as usize].sample_id.clone(),
                candidate_index: sample as usize,
                offset_frames,
                l,
            })
            .collect();
        groups.sort_by(|a, b| {
            b.l.cmp(&a.l)
                .then(a.candidate_index.cmp(&b.candidate_index))
                .then(a.offset_frames.cmp(&b.offset_frames))
        });
        Ok(RawMatchingList {
            query_id: fp.sample_id.clone(),
            groups,
        })
    }

    /// Query every stored fingerprint against the rest, in insertion order.
    /// Runs on the current rayon pool; output order does not depend on it.
    pub fn query_all(&self, t_l: u32) -> Result<Vec<RawMatchingList>, DbError> {
        self.fingerprints.par_iter().map(|fp| self.query(fp, t_l)).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, DbError> {
        let mut buf = Vec::new();
        buf.extend_from_slice(DB_MAGIC);
        buf.extend_from_slice(&DB_VERSION.to_le_bytes());
        for fp in &self.fingerprints {
            write_fingerprint(&mut buf, fp)?;
        }
        Ok(buf)
    }

    /// Parse a `CLDB` file and rebuild the index.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DbError> {
        if bytes.len() < 6 || &bytes[..4] != DB_MAGIC {
            return Err(DbError::Format("missing CLDB magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != DB_VERSION {
            return Err(DbError::Format(format!("unsupported version {version}")));
        }
        let mut r: &[u8] = &bytes[6..];
        let mut db = MatchDb::new();
        while let Some(fp) = read_fingerprint(&mut r)? {
            db.insert(fp)?;
        }
        Ok(db)
    }

    pub fn save(&self, path: &Path) -> Result<(), DbError> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DbError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

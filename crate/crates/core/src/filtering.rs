//! False-positive filtering of per-query matching lists.
//!
//! Two kinds of false match are removed:
//!
//! * **landmark-level**: a candidate listed under several offsets. Only the
//!   offset group with the most matching landmarks is kept
//!   ([`dedupe_offsets`]).
//! * **sample-level**: a candidate that is not a recording of the same event.
//!   With `p_i = l_i / t_i` sorted descending and `Δ_i = p_{i+1} - p_i`,
//!   every candidate with `p_i ≥ avg(p)` is kept, and below the average the
//!   list is cut right after the first `Δ_j ≤ t_d` ([`filter_matches`]).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::match_db::{OffsetGroup, RawMatchingList};

/// Slack for float comparisons against the average and against `t_d`.
const EPS: f64 = 1e-12;

/// Which slopes may end the accepted run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropEdge {
    /// Scan starts at `i = k + 1`: the slope leaving the last above-average
    /// candidate never truncates.
    #[default]
    Literal,
    /// Scan starts at `i = k`: a steep slope right after the last
    /// above-average candidate already truncates.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub t_l: u32,
    pub t_d: f64,
    pub drop_edge: DropEdge,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            t_l: 5,
            t_d: -0.07,
            drop_edge: DropEdge::Literal,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.t_l < 1 {
            return Err("t_l must be ≥ 1".into());
        }
        if self.t_d >= 0.0 || self.t_d.is_nan() {
            return Err(format!("t_d must be negative, got {}", self.t_d));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchCandidate {
    pub candidate_id: String,
    pub candidate_index: usize,
    /// Matching landmarks at the kept offset.
    pub l: u32,
    pub offset_frames: i64,
    /// Total landmarks of the candidate.
    pub t: usize,
    pub p: f64,
}

/// One query's candidates, unique and sorted by `p` descending (ties: `l`
/// descending, then insertion order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingList {
    pub query_id: String,
    pub candidates: Vec<MatchCandidate>,
}

impl MatchingList {
    pub fn n(&self) -> usize {
        self.candidates.len()
    }

    pub fn percentages(&self) -> Vec<f64> {
        percentages(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    AboveAvg,
    BelowAvgBeforeDrop,
    DropEdge,
    AfterDrop,
    DedupLoser,
    /// Filtering disabled.
    Unfiltered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub candidate_id: String,
    pub l: u32,
    pub t: usize,
    pub p: f64,
    pub offset_frames: i64,
    pub accepted: bool,
    pub reason: Reason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Deduped {
    pub list: MatchingList,
    pub losers: Vec<OffsetGroup>,
}

fn ratio(l: u32, t: usize) -> f64 {
    if t == 0 {
        0.0
    } else {
        l as f64 / t as f64
    }
}

fn sort_candidates(c: &mut [MatchCandidate]) {
    c.sort_by(|a, b| {
        b.p.total_cmp(&a.p)
            .then(b.l.cmp(&a.l))
            .then(a.candidate_index.cmp(&b.candidate_index))
    });
}

/// Keep one offset group per candidate (max `l`; ties: smaller `|offset|`,
/// then smaller signed offset), attach `p = l / t`, sort by `p` descending.
///
/// `total_of` maps a candidate id to its total landmark count.
pub fn dedupe_offsets(raw: &RawMatchingList, total_of: impl Fn(&str) -> usize) -> Deduped {
    let mut best: BTreeMap<usize, &OffsetGroup> = BTreeMap::new();
    for g in &raw.groups {
        let better = |cur: &OffsetGroup| {
            (
                g.l,
                std::cmp::Reverse(g.offset_frames.unsigned_abs()),
                std::cmp::Reverse(g.offset_frames),
            ) > (
                cur.l,
                std::cmp::Reverse(cur.offset_frames.unsigned_abs()),
                std::cmp::Reverse(cur.offset_frames),
            )
        };
        match best.get(&g.candidate_index) {
            Some(cur) if !better(cur) => {}
            _ => {
                best.insert(g.candidate_index, g);
            }
        }
    }
    let losers = raw
        .groups
        .iter()
        .filter(|g| !std::ptr::eq(*g, best[&g.candidate_index]))
        .cloned()
        .collect();
    let mut candidates: Vec<MatchCandidate> = best
        .values()
        .map(|g| {
            let t = total_of(&g.candidate_id);
            MatchCandidate {
                candidate_id: g.candidate_id.clone(),
                candidate_index: g.candidate_index,
                l: g.l,
                offset_frames: g.offset_frames,
                t,
                p: ratio(g.l, t),
            }
        })
        .collect();
    sort_candidates(&mut candidates);
    Deduped {
        list: MatchingList {
            query_id: raw.query_id.clone(),
            candidates,
        },
        losers,
    }
}

/// The `p` values in list order.
pub fn percentages(list: &MatchingList) -> Vec<f64> {
    list.candidates.iter().map(|c| c.p).collect()
}

/// Per-position accept/reason for a descending `p` sequence.
pub fn classify(p: &[f64], params: &FilterParams) -> Vec<(bool, Reason)> {
    let n = p.len();
    if n == 0 {
        return Vec::new();
    }
    let avg = p.iter().sum::<f64>() / n as f64;
    // number of leading entries at or above the average (1-based k)
    let k = p.iter().take_while(|&&v| v >= avg - EPS).count();
    let start = match params.drop_edge {
        DropEdge::Literal => k + 1,
        DropEdge::Strict => k.max(1),
    };
    // first 1-based j ≥ start with Δ_j = p_{j+1} - p_j ≤ t_d
    let j = (start..n).find(|&i| p[i] - p[i - 1] <= params.t_d + EPS);
    (1..=n)
        .map(|i| match j {
            _ if i <= k => (true, Reason::AboveAvg),
            Some(j) if i == j => (true, Reason::DropEdge),
            Some(j) if i > j => (false, Reason::AfterDrop),
            _ => (true, Reason::BelowAvgBeforeDrop),
        })
        .collect()
}

/// Truncate a deduped list at the sample-level false-positive boundary.
/// The result is always a prefix of the input.
pub fn filter_matches(list: &MatchingList, params: &FilterParams) -> MatchingList {
    let kept = classify(&percentages(list), params).iter().filter(|(a, _)| *a).count();
    MatchingList {
        query_id: list.query_id.clone(),
        candidates: list.candidates[..kept].to_vec(),
    }
}

/// Everything the filter decided for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredQuery {
    pub query_id: String,
    pub accepted: MatchingList,
    pub decisions: Vec<Decision>,
}

/// Dedupe and filter one raw list. With `params = None` nothing is removed
/// and every raw group is reported as accepted; the accepted list still
/// carries one entry per candidate (its strongest offset).
pub fn filter_query(
    raw: &RawMatchingList,
    total_of: impl Fn(&str) -> usize,
    params: Option<&FilterParams>,
) -> FilteredQuery {
    let deduped = dedupe_offsets(raw, &total_of);
    let Some(params) = params else {
        let decisions = raw
            .groups
            .iter()
            .map(|g| {
                let t = total_of(&g.candidate_id);
                Decision {
                    candidate_id: g.candidate_id.clone(),
                    l: g.l,
                    t,
                    p: ratio(g.l, t),
                    offset_frames: g.offset_frames,
                    accepted: true,
                    reason: Reason::Unfiltered,
                }
            })
            .collect();
        return FilteredQuery {
            query_id: raw.query_id.clone(),
            accepted: deduped.list,
            decisions,
        };
    };

    let classes = classify(&percentages(&deduped.list), params);
    let mut decisions: Vec<Decision> = deduped
        .list
        .candidates
        .iter()
        .zip(&classes)
        .map(|(c, &(accepted, reason))| Decision {
            candidate_id: c.candidate_id.clone(),
            l: c.l,
            t: c.t,
            p: c.p,
            offset_frames: c.offset_frames,
            accepted,
            reason,
        })
        .collect();
    decisions.extend(deduped.losers.iter().map(|g| {
        let t = total_of(&g.candidate_id);
        Decision {
            candidate_id: g.candidate_id.clone(),
            l: g.l,
            t,
            p: ratio(g.l, t),
            offset_frames: g.offset_frames,
            accepted: false,
            reason: Reason::DedupLoser,
        }
    }));
    let kept = classes.iter().filter(|(a, _)| *a).count();
    let mut accepted = deduped.list;
    accepted.candidates.truncate(kept);
    FilteredQuery {
        query_id: raw.query_id.clone(),
        accepted,
        decisions,
    }
}

/// [`filter_query`] over every query, preserving input order.
pub fn filter_all(
    raws: &[RawMatchingList],
    total_of: impl Fn(&str) -> usize + Sync,
    params: Option<&FilterParams>,
) -> Vec<FilteredQuery> {
    raws.iter().map(|r| filter_query(r, &total_of, params)).collect()
}

//! Relative quality scores inside a cluster.
//!
//! The landmark score of a sample is the sum of matching-landmark evidence
//! over its edges in the match graph. The neighbour-count baseline is the
//! vertex degree, which ties often; its ranks are reported as ranges.

use serde::{Deserialize, Serialize};

use crate::clustering::MatchGraph;

/// Sum of edge evidence `l` over the edges incident to `v`.
pub fn score_proposed(v: usize, g: &MatchGraph) -> u64 {
    g.edges().filter(|e| e.a == v || e.b == v).map(|e| e.l as u64).sum()
}

/// Neighbour count of `v`.
pub fn score_km(v: usize, g: &MatchGraph) -> usize {
    g.degree(v)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityScore {
    pub sample_id: String,
    pub vertex: usize,
    pub proposed_score: u64,
    /// 1-based; ties broken by insertion order.
    pub rank_proposed: usize,
    /// Another member has the same proposed score.
    pub proposed_tied: bool,
    pub km_score: usize,
    pub km_rank_lo: usize,
    pub km_rank_hi: usize,
}

/// Rank cluster members by both scores. Output is ordered by proposed rank.
pub fn rank_cluster(cluster: &[usize], g: &MatchGraph) -> Vec<QualityScore> {
    let scored: Vec<(usize, u64, usize)> = cluster
        .iter()
        .map(|&v| (v, score_proposed(v, g), score_km(v, g)))
        .collect();
    rank_scores(&scored, g)
}

/// Rank precomputed `(vertex, proposed, km)` triples.
pub fn rank_scores(scored: &[(usize, u64, usize)], g: &MatchGraph) -> Vec<QualityScore> {
    let mut order: Vec<&(usize, u64, usize)> = scored.iter().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    order
        .iter()
        .enumerate()
        .map(|(i, &&(v, proposed, km))| {
            let higher = scored.iter().filter(|s| s.2 > km).count();
            let at_least = scored.iter().filter(|s| s.2 >= km).count();
            QualityScore {
                sample_id: g.vertices[v].clone(),
                vertex: v,
                proposed_score: proposed,
                rank_proposed: i + 1,
                proposed_tied: scored.iter().filter(|s| s.1 == proposed).count() > 1,
                km_score: km,
                km_rank_lo: higher + 1,
                km_rank_hi: at_least,
            }
        })
        .collect()
}

//! Score `organise` reports against a ground-truth manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus_gen::{FpKind, GroundTruthManifest};
use crate::filtering::Reason;
use crate::pipeline::Error;
use crate::report::*;

/// Offsets and timeline positions may be off by this many frames.
pub const TOLERANCE_FRAMES: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedCluster {
    pub cluster: usize,
    pub songs: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpRemoval {
    pub injected: usize,
    pub removed: usize,
    /// `removed / injected`, absent when nothing was injected.
    pub rate: Option<f64>,
}

impl FpRemoval {
    fn new(injected: usize, removed: usize) -> Self {
        Self {
            injected,
            removed,
            rate: (injected > 0).then(|| removed as f64 / injected as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub checked: usize,
    pub within_tolerance: usize,
    pub max_error_s: f64,
    pub tolerance_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRank {
    pub cluster: usize,
    pub reference_id: String,
    pub song_id: usize,
    pub cluster_size: usize,
    pub rank_proposed: usize,
    pub km_rank_lo: usize,
    pub km_rank_hi: usize,
    /// The reference shares at least as much audio with the rest of the
    /// cluster as any other member does.
    pub max_coverage: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub filtered: bool,
    pub n_songs: usize,
    pub clusters: usize,
    /// Fraction of clustered clips that belong to their cluster's majority song.
    pub purity: f64,
    /// Clusters holding exactly the clips of one song.
    pub exact_clusters: usize,
    pub merged_clusters: Vec<MergedCluster>,
    pub unmatched: usize,
    pub sample_level_fp: FpRemoval,
    pub landmark_level_fp: FpRemoval,
    /// Same-song candidates that reached the filter.
    pub true_matches: usize,
    pub false_negatives: usize,
    pub false_negative_rate: f64,
    /// Accepted cross-song candidates that were not injected.
    pub cross_song_accepted: usize,
    pub offsets: ErrorStats,
    pub timelines: ErrorStats,
    pub references: Vec<ReferenceRank>,
    pub references_rank_one: usize,
    pub references_not_worse_than_km: usize,
    pub km_tie_ranges: usize,
    /// Fraction of clusters with at least one K.M. tie range.
    pub km_ambiguity: f64,
    pub proposed_ties: usize,
}

fn overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

fn collect_orphans(
    clusters: &ClusterReport,
    rankings: &RankingReport,
    decisions: &DecisionReport,
    manifest: &GroundTruthManifest,
) -> Vec<String> {
    let mut reported: BTreeSet<&str> = BTreeSet::new();
    reported.extend(
        clusters
            .clusters
            .iter()
            .flat_map(|c| c.members.iter().map(|m| m.sample_id.as_str())),
    );
    reported.extend(clusters.unmatched.iter().map(String::as_str));
    let mut mentioned = reported.clone();
    mentioned.extend(
        rankings
            .clusters
            .iter()
            .flat_map(|c| c.entries.iter().map(|e| e.sample_id.as_str())),
    );
    for q in &decisions.queries {
        mentioned.insert(&q.query_id);
        mentioned.extend(q.decisions.iter().map(|d| d.candidate_id.as_str()));
    }
    let truth: BTreeSet<&str> = manifest.clips.iter().map(|c| c.clip_id.as_str()).collect();
    let mut orphans: Vec<String> = mentioned
        .difference(&truth)
        .map(|s| format!("{s} (not in manifest)"))
        .collect();
    orphans.extend(truth.difference(&reported).map(|s| format!("{s} (not in report)")));
    orphans
}

/// Compare the three `organise` reports with the manifest.
pub fn evaluate(
    clusters: &ClusterReport,
    rankings: &RankingReport,
    decisions: &DecisionReport,
    manifest: &GroundTruthManifest,
) -> Result<EvalReport, Error> {
    let orphans = collect_orphans(clusters, rankings, decisions, manifest);
    if !orphans.is_empty() {
        return Err(Error::Orphans(orphans));
    }
    let truth = |id: &str| manifest.clip(id).expect("orphans checked");
    let frame_s = clusters.frame_duration_s;
    let tolerance_s = TOLERANCE_FRAMES * frame_s + 1e-9;

    // clustering
    let mut song_sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for c in &manifest.clips {
        *song_sizes.entry(c.song_id).or_default() += 1;
    }
    let mut majority_total = 0;
    let mut clustered = 0;
    let mut exact = 0;
    let mut merged = Vec::new();
    let mut timelines = ErrorStats {
        checked: 0,
        within_tolerance: 0,
        max_error_s: 0.0,
        tolerance_s,
    };
    for c in &clusters.clusters {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for m in &c.members {
            *counts.entry(truth(&m.sample_id).song_id).or_default() += 1;
        }
        majority_total += counts.values().max().copied().unwrap_or(0);
        clustered += c.members.len();
        if counts.len() > 1 {
            merged.push(MergedCluster {
                cluster: c.cluster,
                songs: counts.keys().copied().collect(),
            });
            continue;
        }
        let (&song, &n) = counts.iter().next().expect("clusters are nonempty");
        if n == song_sizes[&song] {
            exact += 1;
        }
        let start = c
            .members
            .iter()
            .map(|m| truth(&m.sample_id).crop_start_s)
            .fold(f64::INFINITY, f64::min);
        for m in &c.members {
            let err = (m.timeline_position_s - (truth(&m.sample_id).crop_start_s - start)).abs();
            timelines.checked += 1;
            timelines.within_tolerance += usize::from(err <= tolerance_s);
            timelines.max_error_s = timelines.max_error_s.max(err);
        }
    }
    let purity = if clustered == 0 {
        1.0
    } else {
        majority_total as f64 / clustered as f64
    };

    // filtering
    let by_query: BTreeMap<&str, &QueryDecisions> =
        decisions.queries.iter().map(|q| (q.query_id.as_str(), q)).collect();
    let accepted_at = |query: &str, candidate: &str, offset: Option<i64>| {
        by_query.get(query).is_some_and(|q| {
            q.decisions
                .iter()
                .any(|d| d.accepted && d.candidate_id == candidate && offset.is_none_or(|o| d.offset_frames == o))
        })
    };
    let (mut sample_inj, mut sample_rm, mut lm_inj, mut lm_rm) = (0, 0, 0, 0);
    let mut phantom_pairs = BTreeSet::new();
    for fp in &manifest.injected {
        match fp.kind {
            FpKind::SampleLevel => {
                sample_inj += 1;
                phantom_pairs.insert((fp.query_id.as_str(), fp.phantom_candidate_id.as_str()));
                sample_rm += usize::from(!accepted_at(&fp.query_id, &fp.phantom_candidate_id, None));
            }
            FpKind::LandmarkLevel => {
                lm_inj += 1;
                lm_rm += usize::from(!accepted_at(
                    &fp.query_id,
                    &fp.phantom_candidate_id,
                    Some(fp.offset_frames),
                ));
            }
        }
    }

    let mut true_matches = 0;
    let mut false_negatives = 0;
    let mut cross = 0;
    let mut offsets = ErrorStats {
        checked: 0,
        within_tolerance: 0,
        max_error_s: 0.0,
        tolerance_s,
    };
    for q in &decisions.queries {
        let qt = truth(&q.query_id);
        for d in q.decisions.iter().filter(|d| d.reason != Reason::DedupLoser) {
            let ct = truth(&d.candidate_id);
            if ct.song_id != qt.song_id {
                if d.accepted && !phantom_pairs.contains(&(q.query_id.as_str(), d.candidate_id.as_str())) {
                    cross += 1;
                }
                continue;
            }
            true_matches += 1;
            if !d.accepted {
                false_negatives += 1;
                continue;
            }
            let err = (d.offset_s - (ct.crop_start_s - qt.crop_start_s)).abs();
            offsets.checked += 1;
            offsets.within_tolerance += usize::from(err <= tolerance_s);
            offsets.max_error_s = offsets.max_error_s.max(err);
        }
    }

    // ranking
    let mut references = Vec::new();
    let mut km_tie_ranges = 0;
    let mut ambiguous = 0;
    let mut proposed_ties = 0;
    for c in &rankings.clusters {
        let ranges: BTreeSet<(usize, usize)> = c
            .entries
            .iter()
            .filter(|e| e.km_rank_lo < e.km_rank_hi)
            .map(|e| (e.km_rank_lo, e.km_rank_hi))
            .collect();
        km_tie_ranges += ranges.len();
        ambiguous += usize::from(!ranges.is_empty());
        let tied: BTreeSet<u64> = c
            .entries
            .iter()
            .filter(|e| e.proposed_tied)
            .map(|e| e.proposed_score)
            .collect();
        proposed_ties += tied.len();

        let window = |id: &str| {
            let t = truth(id);
            (t.crop_start_s, t.crop_end_s())
        };
        let coverage = |id: &str| -> f64 {
            let t = truth(id);
            c.entries
                .iter()
                .filter(|e| e.sample_id != id && truth(&e.sample_id).song_id == t.song_id)
                .map(|e| overlap(window(id), window(&e.sample_id)))
                .sum()
        };
        let best_coverage = c.entries.iter().map(|e| coverage(&e.sample_id)).fold(0.0, f64::max);
        for e in c.entries.iter().filter(|e| truth(&e.sample_id).is_reference) {
            references.push(ReferenceRank {
                cluster: c.cluster,
                reference_id: e.sample_id.clone(),
                song_id: truth(&e.sample_id).song_id,
                cluster_size: c.entries.len(),
                rank_proposed: e.rank_proposed,
                km_rank_lo: e.km_rank_lo,
                km_rank_hi: e.km_rank_hi,
                max_coverage: coverage(&e.sample_id) + 1e-9 >= best_coverage,
            });
        }
    }

    Ok(EvalReport {
        schema_version: SCHEMA_VERSION,
        filtered: decisions.filtered,
        n_songs: song_sizes.len(),
        clusters: clusters.clusters.len(),
        purity,
        exact_clusters: exact,
        merged_clusters: merged,
        unmatched: clusters.unmatched.len(),
        sample_level_fp: FpRemoval::new(sample_inj, sample_rm),
        landmark_level_fp: FpRemoval::new(lm_inj, lm_rm),
        true_matches,
        false_negatives,
        false_negative_rate: if true_matches == 0 {
            0.0
        } else {
            false_negatives as f64 / true_matches as f64
        },
        cross_song_accepted: cross,
        offsets,
        timelines,
        references_rank_one: references.iter().filter(|r| r.rank_proposed == 1).count(),
        references_not_worse_than_km: references.iter().filter(|r| r.rank_proposed <= r.km_rank_lo).count(),
        references,
        km_tie_ranges,
        km_ambiguity: if rankings.clusters.is_empty() {
            0.0
        } else {
            ambiguous as f64 / rankings.clusters.len() as f64
        },
        proposed_ties,
    })
}

/// Read the reports from `dir`, evaluate, and write `eval.json` there.
pub fn evaluate_dir(dir: &Path, manifest: &GroundTruthManifest) -> Result<EvalReport, Error> {
    let clusters: ClusterReport = read_report(&dir.join(CLUSTERS_FILE))?;
    let rankings: RankingReport = read_report(&dir.join(RANKINGS_FILE))?;
    let decisions: DecisionReport = read_report(&dir.join(DECISIONS_FILE))?;
    let report = evaluate(&clusters, &rankings, &decisions, manifest)?;
    write_json(&dir.join(EVAL_FILE), &report)?;
    Ok(report)
}

fn pct(rate: Option<f64>) -> String {
    rate.map_or_else(|| "n/a".into(), |r| format!("{:.2}%", 100.0 * r))
}

impl EvalReport {
    /// Human-readable summary, one metric per line.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let mut line = |l: String| {
            s.push_str(&l);
            s.push('\n');
        };
        line(format!(
            "filtering            {}",
            if self.filtered { "on" } else { "off" }
        ));
        line(format!(
            "clusters             {} (songs {}, exact {}, unmatched clips {})",
            self.clusters, self.n_songs, self.exact_clusters, self.unmatched
        ));
        line(format!("purity               {:.4}", self.purity));
        for m in &self.merged_clusters {
            line(format!("merged cluster       {} holds songs {:?}", m.cluster, m.songs));
        }
        line(format!(
            "sample-level FPs     {}/{} removed ({})",
            self.sample_level_fp.removed,
            self.sample_level_fp.injected,
            pct(self.sample_level_fp.rate)
        ));
        line(format!(
            "landmark-level FPs   {}/{} removed ({})",
            self.landmark_level_fp.removed,
            self.landmark_level_fp.injected,
            pct(self.landmark_level_fp.rate)
        ));
        line(format!(
            "false negatives      {}/{} ({:.2}%)",
            self.false_negatives,
            self.true_matches,
            100.0 * self.false_negative_rate
        ));
        line(format!("cross-song accepted  {}", self.cross_song_accepted));
        line(format!(
            "offset errors        {}/{} within {:.4} s, max {:.4} s",
            self.offsets.within_tolerance, self.offsets.checked, self.offsets.tolerance_s, self.offsets.max_error_s
        ));
        line(format!(
            "timeline errors      {}/{} within {:.4} s, max {:.4} s",
            self.timelines.within_tolerance,
            self.timelines.checked,
            self.timelines.tolerance_s,
            self.timelines.max_error_s
        ));
        for r in &self.references {
            line(format!(
                "reference            cluster {} {}: proposed rank {}, K.M. rank {}-{} of {}{}",
                r.cluster,
                r.reference_id,
                r.rank_proposed,
                r.km_rank_lo,
                r.km_rank_hi,
                r.cluster_size,
                if r.max_coverage { "" } else { " (not max coverage)" }
            ));
        }
        line(format!(
            "reference rank 1     {}/{} clusters, not worse than K.M. in {}",
            self.references_rank_one,
            self.references.len(),
            self.references_not_worse_than_km
        ));
        line(format!(
            "K.M. tie ranges      {} (ambiguity {:.2})",
            self.km_tie_ranges, self.km_ambiguity
        ));
        line(format!("proposed ties        {}", self.proposed_ties));
        s
    }
}

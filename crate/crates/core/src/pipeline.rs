//! End-to-end stages behind the command-line tool: ingest a directory of
//! WAV files into a [`MatchDb`], then organise the database into filtered
//! matches, clusters, timelines and rankings.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::audio_io::{canonicalise, read_wav, AudioError};
use crate::clustering::{build_graph, connected_components, propagate_offsets, ClusterSet, MatchGraph};
use crate::config::{ConfigError, PipelineConfig};
use crate::corpus_gen::{inject_false_positives, CorpusError, GroundTruthManifest, InjectionSpec};
use crate::filtering::{filter_all, FilteredQuery};
use crate::fingerprint::{fingerprint_clip, Fingerprint, FingerprintError, FingerprintParams};
use crate::match_db::{DbError, MatchDb, RawMatchingList};
use crate::quality::{rank_cluster, score_km, score_proposed};
use crate::report::*;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Input(String),
    #[error("{path}: schema version {found}, expected {expected}")]
    Schema { path: PathBuf, found: u32, expected: u32 },
    #[error("ids missing from the manifest: {}", .0.join(", "))]
    Orphans(Vec<String>),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for broken invariants, 1 for everything caused by inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invariant(_) => 2,
            _ => 1,
        }
    }
}

/// WAV files directly inside `dir`, sorted by file name.
pub fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    Ok(files)
}

/// Decode, canonicalise and fingerprint one file; the id is the file stem.
pub fn fingerprint_file(path: &Path, params: &FingerprintParams) -> Result<Fingerprint, Error> {
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Input(format!("{}: file name is not UTF-8", path.display())))?;
    let clip = canonicalise(&read_wav(path)?, params.analysis_rate)?;
    Ok(fingerprint_clip(id, &clip, params)?)
}

#[derive(Debug)]
pub struct Ingested {
    pub db: MatchDb,
    /// Files that could not be fingerprinted, with the reason.
    pub failures: Vec<(PathBuf, String)>,
}

/// Fingerprint every WAV in `dir` in parallel and insert in file-name
/// order. Failing files are skipped; it is an error only when files exist
/// and all of them fail.
pub fn ingest(dir: &Path, params: &FingerprintParams) -> Result<Ingested, Error> {
    params.validate()?;
    let files = list_wavs(dir)?;
    let results: Vec<Result<Fingerprint, Error>> = files.par_iter().map(|p| fingerprint_file(p, params)).collect();
    let mut db = MatchDb::new();
    let mut failures = Vec::new();
    for (path, result) in files.iter().zip(results) {
        match result.and_then(|fp| db.insert(fp).map_err(Error::from)) {
            Ok(()) => {}
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                failures.push((path.clone(), e.to_string()));
            }
        }
    }
    if !files.is_empty() && db.is_empty() {
        return Err(Error::Input(format!(
            "all {} WAV files in {} failed",
            files.len(),
            dir.display()
        )));
    }
    Ok(Ingested { db, failures })
}

#[derive(Debug, Clone, Default)]
pub struct OrganiseOptions {
    /// Skip false-positive filtering.
    pub no_filter: bool,
    /// Plant false positives before filtering (needs a manifest).
    pub inject: Option<InjectionSpec>,
}

/// Everything `organise` produces.
#[derive(Debug, Clone)]
pub struct Organised {
    pub raw: Vec<RawMatchingList>,
    pub filtered: Vec<FilteredQuery>,
    pub graph: MatchGraph,
    pub clusters: ClusterSet,
    pub cluster_report: ClusterReport,
    pub rankings: RankingReport,
    pub decisions: DecisionReport,
    /// The manifest including any injections.
    pub manifest: Option<GroundTruthManifest>,
}

/// Query every sample against the rest, filter, cluster, place on
/// timelines and rank.
pub fn organise(
    db: &MatchDb,
    cfg: &PipelineConfig,
    manifest: Option<GroundTruthManifest>,
    opts: &OrganiseOptions,
) -> Result<Organised, Error> {
    cfg.validate()?;
    let params = &cfg.fingerprint;
    let mut manifest = manifest;
    let ids: Vec<String> = db.fingerprints().iter().map(|f| f.sample_id.clone()).collect();
    let totals: Vec<usize> = db.fingerprints().iter().map(|f| f.total_landmarks()).collect();

    let mut raw = db.query_all(cfg.filter.t_l)?;
    if let Some(spec) = &opts.inject {
        let m = manifest
            .as_mut()
            .ok_or_else(|| Error::Input("false-positive injection needs a ground-truth manifest".into()))?;
        inject_false_positives(&mut raw, m, &ids, &totals, spec);
    }

    let total_of = |id: &str| db.get(id).map_or(0, |f| f.total_landmarks());
    let filter = (!opts.no_filter).then_some(&cfg.filter);
    let filtered = filter_all(&raw, total_of, filter);

    let frame_s = params.frame_duration_s();
    let lists: Vec<_> = filtered.iter().map(|f| f.accepted.clone()).collect();
    let graph = build_graph(ids.clone(), &lists, frame_s);
    let clusters = connected_components(&graph);
    check_partition(&clusters, ids.len())?;
    check_handshake(&graph)?;

    let is_ref = |id: &str| manifest.as_ref().map(|m| m.clip(id).is_some_and(|c| c.is_reference));
    let mut cluster_entries = Vec::with_capacity(clusters.clusters.len());
    let mut rankings = Vec::with_capacity(clusters.clusters.len());
    for (ci, members) in clusters.clusters.iter().enumerate() {
        let timeline = propagate_offsets(members, &graph);
        if timeline.positions.len() != members.len() {
            return Err(Error::Invariant(format!("cluster {ci} is not connected")));
        }
        cluster_entries.push(ClusterEntry {
            cluster: ci,
            members: timeline
                .positions
                .iter()
                .map(|&(v, p)| ClusterMember {
                    sample_id: ids[v].clone(),
                    timeline_position_s: p as f64 * frame_s,
                })
                .collect(),
            warnings: timeline.warnings,
        });
        rankings.push(ClusterRanking {
            cluster: ci,
            entries: rank_cluster(members, &graph)
                .into_iter()
                .map(|q| RankingEntry {
                    is_reference: is_ref(&q.sample_id),
                    sample_id: q.sample_id,
                    proposed_score: q.proposed_score,
                    rank_proposed: q.rank_proposed,
                    proposed_tied: q.proposed_tied,
                    km_score: q.km_score,
                    km_rank_lo: q.km_rank_lo,
                    km_rank_hi: q.km_rank_hi,
                })
                .collect(),
        });
    }

    let cluster_report = ClusterReport {
        schema_version: SCHEMA_VERSION,
        filtered: !opts.no_filter,
        frame_duration_s: frame_s,
        clusters: cluster_entries,
        unmatched: clusters.unmatched.iter().map(|&v| ids[v].clone()).collect(),
        warnings: graph.warnings.clone(),
    };
    let decisions = DecisionReport {
        schema_version: SCHEMA_VERSION,
        filtered: !opts.no_filter,
        t_l: cfg.filter.t_l,
        t_d: cfg.filter.t_d,
        queries: filtered
            .iter()
            .map(|f| QueryDecisions {
                query_id: f.query_id.clone(),
                decisions: f
                    .decisions
                    .iter()
                    .map(|d| DecisionEntry {
                        candidate_id: d.candidate_id.clone(),
                        l: d.l,
                        t: d.t,
                        p: d.p,
                        offset_frames: d.offset_frames,
                        offset_s: d.offset_frames as f64 * frame_s,
                        accepted: d.accepted,
                        reason: d.reason,
                    })
                    .collect(),
            })
            .collect(),
    };
    Ok(Organised {
        raw,
        filtered,
        graph,
        clusters,
        cluster_report,
        rankings: RankingReport {
            schema_version: SCHEMA_VERSION,
            clusters: rankings,
        },
        decisions,
        manifest,
    })
}

fn check_partition(c: &ClusterSet, n: usize) -> Result<(), Error> {
    let mut seen = BTreeSet::new();
    for &v in c.clusters.iter().flatten().chain(&c.unmatched) {
        if !seen.insert(v) {
            return Err(Error::Invariant(format!("vertex {v} appears in two clusters")));
        }
    }
    if seen.len() != n || c.clusters.iter().any(|m| m.len() < 2) {
        return Err(Error::Invariant("clusters do not partition the samples".into()));
    }
    Ok(())
}

/// Each edge contributes its evidence to both endpoints.
fn check_handshake(g: &MatchGraph) -> Result<(), Error> {
    let n = g.vertices.len();
    let scores: u64 = (0..n).map(|v| score_proposed(v, g)).sum();
    let evidence: u64 = g.edges().map(|e| e.l as u64).sum();
    let degrees: usize = (0..n).map(|v| score_km(v, g)).sum();
    if scores != 2 * evidence || degrees != 2 * g.edge_count() {
        return Err(Error::Invariant(format!(
            "score sum {scores} is not twice the edge evidence {evidence}"
        )));
    }
    Ok(())
}

impl Organised {
    /// Write the four reports plus the CSV ranking mirror into `dir`, and
    /// the manifest when it changed through injection.
    pub fn write(&self, dir: &Path, write_manifest: bool) -> Result<(), Error> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join(CLUSTERS_FILE), &self.cluster_report)?;
        write_json(&dir.join(RANKINGS_FILE), &self.rankings)?;
        write_json(&dir.join(DECISIONS_FILE), &self.decisions)?;
        let csv = dir.join(RANKINGS_CSV_FILE);
        std::fs::write(&csv, self.rankings.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let graph = dir.join(GRAPH_FILE);
        std::fs::write(&graph, self.graph.to_csv()).map_err(|e| Error::io(&graph, e))?;
        if write_manifest {
            if let Some(m) = &self.manifest {
                m.save(&dir.join("manifest.json"))?;
            }
        }
        Ok(())
    }
}

//! End-to-end acceptance run on the seeded default corpus plus the property
//! suites. Prints one PASS/FAIL line per criterion and exits non-zero when
//! any criterion fails.

#[path = "suites/filter_rule.rs"]
mod filter_rule;
#[path = "suites/oracles.rs"]
mod oracles;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use clipgraph::corpus_gen::{generate_corpus, write_corpus, CorpusSpec, GroundTruthManifest, InjectionSpec};
use clipgraph::eval::{evaluate, EvalReport};
use clipgraph::match_db::MatchDb;
use clipgraph::pipeline::{ingest, organise, OrganiseOptions};
use clipgraph::PipelineConfig;

const RUNTIME_LIMIT: Duration = Duration::from_secs(120);
const MAX_FN_RATE: f64 = 0.15;

/// One pass of generate, write WAVs, ingest, save db, organise, write reports.
struct Run {
    db: MatchDb,
    manifest: GroundTruthManifest,
    clean: EvalReport,
    elapsed: Duration,
    /// File name to bytes for the db, the corpus manifest and every report.
    files: BTreeMap<String, Vec<u8>>,
}

fn read_dir_bytes(dir: &Path, prefix: &str, files: &mut BTreeMap<String, Vec<u8>>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = format!("{prefix}/{}", path.file_name().unwrap().to_string_lossy());
        files.insert(name, std::fs::read(&path).unwrap());
    }
}

fn full_run(spec: &CorpusSpec) -> Run {
    let tmp = tempfile::tempdir().unwrap();
    let (corpus_dir, reports_dir, db_path) = (
        tmp.path().join("corpus"),
        tmp.path().join("reports"),
        tmp.path().join("clips.cldb"),
    );
    let start = Instant::now();
    write_corpus(&generate_corpus(spec).unwrap(), &corpus_dir).unwrap();
    let ingested = ingest(&corpus_dir, &PipelineConfig::default().fingerprint).unwrap();
    assert!(ingested.failures.is_empty(), "ingest failures: {:?}", ingested.failures);
    ingested.db.save(&db_path).unwrap();
    let manifest = GroundTruthManifest::load(&corpus_dir.join("manifest.json")).unwrap();
    let organised = organise(
        &ingested.db,
        &PipelineConfig::default(),
        Some(manifest.clone()),
        &OrganiseOptions::default(),
    )
    .unwrap();
    organised.write(&reports_dir, false).unwrap();
    let elapsed = start.elapsed();

    let clean = evaluate(
        &organised.cluster_report,
        &organised.rankings,
        &organised.decisions,
        &manifest,
    )
    .unwrap();
    let mut files = BTreeMap::new();
    files.insert("clips.cldb".to_string(), std::fs::read(&db_path).unwrap());
    files.insert(
        "corpus/manifest.json".to_string(),
        std::fs::read(corpus_dir.join("manifest.json")).unwrap(),
    );
    read_dir_bytes(&reports_dir, "reports", &mut files);
    Run {
        db: ingested.db,
        manifest,
        clean,
        elapsed,
        files,
    }
}

fn injected(run: &Run, no_filter: bool, inject: InjectionSpec) -> EvalReport {
    let opts = OrganiseOptions {
        no_filter,
        inject: Some(inject),
    };
    let o = organise(&run.db, &PipelineConfig::default(), Some(run.manifest.clone()), &opts).unwrap();
    evaluate(
        &o.cluster_report,
        &o.rankings,
        &o.decisions,
        o.manifest.as_ref().unwrap(),
    )
    .unwrap()
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn suite(results: &[(&str, Result<(), String>)]) -> Verdict {
    let failed: Vec<String> = results
        .iter()
        .filter_map(|(name, r)| r.as_ref().err().map(|e| format!("{name}: {e}")))
        .collect();
    let names: Vec<&str> = results.iter().map(|(n, _)| *n).collect();
    if failed.is_empty() {
        verdict(true, format!("{} suites clean ({})", results.len(), names.join(", ")))
    } else {
        verdict(false, failed.join("; "))
    }
}

fn exact_clusters(e: &EvalReport) -> bool {
    e.clusters == e.n_songs && e.exact_clusters == e.n_songs && e.purity == 1.0 && e.merged_clusters.is_empty()
}

fn main() {
    let spec = CorpusSpec::default();
    let first = full_run(&spec);
    let e = &first.clean;
    let n = e.n_songs;
    let mut verdicts: Vec<(&str, Verdict)> = Vec::new();

    let c1 = exact_clusters(e) && first.elapsed < RUNTIME_LIMIT;
    verdicts.push((
        "cluster exactness with filtering",
        verdict(
            c1,
            format!(
                "{} clusters for {n} songs, {} exact, purity {:.4}, {} merged, {} unmatched, {:.1} s end to end",
                e.clusters,
                e.exact_clusters,
                e.purity,
                e.merged_clusters.len(),
                e.unmatched,
                first.elapsed.as_secs_f64()
            ),
        ),
    ));

    let inject = InjectionSpec::default();
    let off = injected(&first, true, inject);
    let on = injected(&first, false, inject);
    let planted =
        on.sample_level_fp.injected == inject.sample_level && on.landmark_level_fp.injected == inject.landmark_level;
    verdicts.push((
        "filtering ablation",
        verdict(
            planted && off.clusters < n && on.clusters == n,
            format!(
                "{} sample-level FPs planted; no filter gives {} clusters, filter gives {} clusters (want < {n} then {n})",
                on.sample_level_fp.injected, off.clusters, on.clusters
            ),
        ),
    ));
    let all_removed = |r: &clipgraph::eval::FpRemoval| r.removed == r.injected;
    verdicts.push((
        "false-positive removal",
        verdict(
            planted && all_removed(&on.sample_level_fp) && all_removed(&on.landmark_level_fp),
            format!(
                "sample-level {}/{} removed, landmark-level {}/{} removed",
                on.sample_level_fp.removed,
                on.sample_level_fp.injected,
                on.landmark_level_fp.removed,
                on.landmark_level_fp.injected
            ),
        ),
    ));

    verdicts.push((
        "false-negative tolerance",
        verdict(
            e.false_negative_rate <= MAX_FN_RATE && exact_clusters(e),
            format!(
                "{}/{} true matches discarded ({:.2}%, limit {:.0}%), clusters exact: {}",
                e.false_negatives,
                e.true_matches,
                100.0 * e.false_negative_rate,
                100.0 * MAX_FN_RATE,
                exact_clusters(e)
            ),
        ),
    ));

    verdicts.push((
        "offset recovery",
        verdict(
            e.offsets.checked > 0 && e.offsets.within_tolerance == e.offsets.checked,
            format!(
                "{}/{} offsets within {:.4} s (max error {:.4} s); timelines {}/{}",
                e.offsets.within_tolerance,
                e.offsets.checked,
                e.offsets.tolerance_s,
                e.offsets.max_error_s,
                e.timelines.within_tolerance,
                e.timelines.checked
            ),
        ),
    ));

    let refs = e.references.len();
    verdicts.push((
        "quality ranking",
        verdict(
            refs == n
                && e.references_rank_one >= 8
                && e.references_not_worse_than_km == refs
                && e.km_tie_ranges >= 1
                && e.proposed_ties <= 1,
            format!(
                "reference ranked 1st in {}/{refs}, never worse than K.M. in {}/{refs}, {} K.M. tie ranges, {} proposed ties",
                e.references_rank_one, e.references_not_worse_than_km, e.km_tie_ranges, e.proposed_ties
            ),
        ),
    ));

    verdicts.push((
        "oracle equivalence",
        suite(&[
            ("peaks x200", oracles::peaks(200)),
            ("pairing x200", oracles::pairing(200)),
            ("query x50", oracles::query(50)),
            ("dedupe x200", oracles::dedupe(200)),
            ("components x200", oracles::components(200)),
            ("scores x100", oracles::scores(100)),
        ]),
    ));

    verdicts.push((
        "filter rule",
        suite(&[
            ("worked trace", filter_rule::worked_trace()),
            ("all equal", filter_rule::all_equal()),
            ("single candidate", filter_rule::single_candidate()),
            ("prefix x500", filter_rule::prefix(500)),
            ("t_d monotone x500", filter_rule::monotone_in_t_d(500)),
            ("above average x500", filter_rule::above_average_survive(500)),
            ("drop edge readings", filter_rule::drop_edge_readings()),
        ]),
    ));

    let second = full_run(&spec);
    let differing: Vec<&String> = first
        .files
        .iter()
        .filter(|(name, bytes)| second.files.get(*name) != Some(bytes))
        .map(|(name, _)| name)
        .collect();
    let same_names = first.files.keys().eq(second.files.keys());
    verdicts.push((
        "determinism",
        verdict(
            same_names && differing.is_empty(),
            if same_names && differing.is_empty() {
                format!("{} files byte-identical across two runs", first.files.len())
            } else {
                format!("differing files: {differing:?}, same file set: {same_names}")
            },
        ),
    ));

    // informational: the same injection with the phantom gap at |t_d|
    let wide = InjectionSpec {
        min_p_gap: -PipelineConfig::default().filter.t_d,
        ..inject
    };
    let (wide_off, wide_on) = (injected(&first, true, wide), injected(&first, false, wide));
    println!(
        "info: phantom gap {:.2}: no filter {} clusters, filter {} clusters, sample-level {}/{} removed, landmark-level {}/{} removed",
        wide.min_p_gap,
        wide_off.clusters,
        wide_on.clusters,
        wide_on.sample_level_fp.removed,
        wide_on.sample_level_fp.injected,
        wide_on.landmark_level_fp.removed,
        wide_on.landmark_level_fp.injected
    );

    let mut failed = 0;
    for (i, (name, v)) in verdicts.iter().enumerate() {
        println!(
            "criterion {} {}: {name}: {}",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!(
        "acceptance: {}/{} criteria pass",
        verdicts.len() - failed,
        verdicts.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

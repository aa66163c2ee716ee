//! Fast paths checked against brute-force oracles on random inputs.

// oracles index grids directly on purpose
#![allow(clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use clipgraph::clustering::{build_graph, connected_components, MatchGraph};
use clipgraph::filtering::{dedupe_offsets, MatchCandidate, MatchingList};
use clipgraph::fingerprint::{
    extract_peaks, hash_landmark, pair_landmarks, Fingerprint, Landmark, PairingParams, Peak, PeakParams, Spectrogram,
};
use clipgraph::match_db::{MatchDb, OffsetGroup, RawMatchingList};
use clipgraph::quality::{score_km, score_proposed};

// ---- peaks ----

fn brute_peaks(rows: &[Vec<f32>], params: &PeakParams) -> Vec<(u32, u16)> {
    let frames = rows.len();
    let bins = rows.first().map_or(0, Vec::len);
    let mut out = Vec::new();
    for f in 0..frames {
        let mut here: Vec<(f32, usize)> = Vec::new();
        for b in 0..bins {
            let v = rows[f][b];
            if v <= params.floor {
                continue;
            }
            let mut strict = true;
            for g in f.saturating_sub(params.frame_radius)..=(f + params.frame_radius).min(frames - 1) {
                for c in b.saturating_sub(params.bin_radius)..=(b + params.bin_radius).min(bins - 1) {
                    if (g, c) != (f, b) && rows[g][c] >= v {
                        strict = false;
                    }
                }
            }
            if strict {
                here.push((v, b));
            }
        }
        here.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        here.truncate(params.max_per_frame);
        here.sort_by_key(|&(_, b)| b);
        out.extend(here.into_iter().map(|(_, b)| (f as u32, b as u16)));
    }
    out
}

fn grid() -> impl Strategy<Value = Vec<Vec<f32>>> {
    // coarse levels make plateaus and ties common
    let cell = prop_oneof![(0u8..4).prop_map(f32::from), 0.0f32..10.0];
    (1usize..=50, 1usize..=50)
        .prop_flat_map(move |(f, b)| prop::collection::vec(prop::collection::vec(cell.clone(), b), f))
}

// ---- pairing ----

fn brute_pairs(peaks: &[Peak], params: &PairingParams) -> Vec<Landmark> {
    let mut out = Vec::new();
    for a in peaks {
        let mut targets: Vec<&Peak> = peaks
            .iter()
            .filter(|t| {
                t.frame > a.frame && t.frame - a.frame <= params.dt_max as u32 && a.bin.abs_diff(t.bin) <= params.df_max
            })
            .collect();
        targets.sort_by_key(|t| (t.frame - a.frame, a.bin.abs_diff(t.bin), t.bin));
        for t in targets.into_iter().take(params.fan_out) {
            out.push(Landmark {
                f1: a.bin,
                f2: t.bin,
                t1: a.frame,
                dt: (t.frame - a.frame) as u16,
            });
        }
    }
    out
}

fn peak_set() -> impl Strategy<Value = Vec<Peak>> {
    prop::collection::btree_set((0u32..90, 0u16..120), 0..=100).prop_map(|s| {
        s.into_iter()
            .map(|(frame, bin)| Peak {
                frame,
                bin,
                magnitude: 1.0,
            })
            .collect()
    })
}

// ---- query ----

fn landmark() -> impl Strategy<Value = Landmark> {
    // a tiny hash space so collisions are frequent
    (0u16..6, 0u16..3, 0u32..30, 1u16..4).prop_map(|(f1, d, t1, dt)| Landmark { f1, f2: f1 + d, t1, dt })
}

fn brute_query(db: &[Fingerprint], query: &Fingerprint, t_l: u32) -> Vec<(usize, i64, u32)> {
    let unique = |fp: &Fingerprint| -> BTreeSet<(u32, u32)> {
        fp.landmarks
            .iter()
            .map(|l| (hash_landmark(l).unwrap().0, l.t1))
            .collect()
    };
    let q = unique(query);
    let mut out = Vec::new();
    for (i, fp) in db.iter().enumerate() {
        if fp.sample_id == query.sample_id {
            continue;
        }
        let mut counts: BTreeMap<i64, u32> = BTreeMap::new();
        for &(hq, tq) in &q {
            for &(hc, tc) in &unique(fp) {
                if hq == hc {
                    *counts.entry(tq as i64 - tc as i64).or_default() += 1;
                }
            }
        }
        out.extend(counts.into_iter().filter(|&(_, l)| l >= t_l).map(|(o, l)| (i, o, l)));
    }
    out.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    out
}

// ---- dedupe ----

fn raw_list() -> impl Strategy<Value = (RawMatchingList, Vec<usize>)> {
    (
        prop::collection::btree_map((0usize..6, -20i64..20), 1u32..50, 0..=20),
        prop::collection::vec(1usize..500, 6),
    )
        .prop_map(|(groups, totals)| {
            let groups = groups
                .into_iter()
                .map(|((c, o), l)| OffsetGroup {
                    candidate_id: format!("c{c}"),
                    candidate_index: c,
                    offset_frames: o,
                    l: l.min(totals[c] as u32),
                })
                .collect();
            (
                RawMatchingList {
                    query_id: "q".into(),
                    groups,
                },
                totals,
            )
        })
}

fn brute_dedupe(raw: &RawMatchingList, totals: &[usize]) -> Vec<(usize, i64, u32)> {
    let mut best: BTreeMap<usize, &OffsetGroup> = BTreeMap::new();
    for g in &raw.groups {
        let better = match best.get(&g.candidate_index) {
            None => true,
            Some(b) => {
                (
                    g.l,
                    std::cmp::Reverse(g.offset_frames.abs()),
                    std::cmp::Reverse(g.offset_frames),
                ) > (
                    b.l,
                    std::cmp::Reverse(b.offset_frames.abs()),
                    std::cmp::Reverse(b.offset_frames),
                )
            }
        };
        if better {
            best.insert(g.candidate_index, g);
        }
    }
    let mut out: Vec<(usize, i64, u32)> = best
        .values()
        .map(|g| (g.candidate_index, g.offset_frames, g.l))
        .collect();
    let p = |c: usize, l: u32| l as f64 / totals[c] as f64;
    out.sort_by(|a, b| {
        p(b.0, b.2)
            .total_cmp(&p(a.0, a.2))
            .then(b.2.cmp(&a.2))
            .then(a.0.cmp(&b.0))
    });
    out
}

// ---- graph ----

fn edge_lists(max_vertices: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize, u32)>)> {
    (1..=max_vertices).prop_flat_map(|n| {
        let edges = prop::collection::vec((0..n, 0..n, 5u32..60), 0..=(2 * n));
        (Just(n), edges)
    })
}

fn lists_from(n: usize, edges: &[(usize, usize, u32)]) -> Vec<MatchingList> {
    let mut lists: Vec<MatchingList> = (0..n)
        .map(|q| MatchingList {
            query_id: format!("v{q}"),
            candidates: Vec::new(),
        })
        .collect();
    for &(a, b, l) in edges {
        if a == b || lists[a].candidates.iter().any(|c| c.candidate_index == b) {
            continue;
        }
        lists[a].candidates.push(MatchCandidate {
            candidate_id: format!("v{b}"),
            candidate_index: b,
            l,
            offset_frames: 0,
            t: 1000,
            p: l as f64 / 1000.0,
        });
    }
    lists
}

fn graph_of(n: usize, lists: &[MatchingList]) -> MatchGraph {
    build_graph((0..n).map(|i| format!("v{i}")).collect(), lists, 0.02)
}

/// Run `test` on `cases` random inputs; the error names the shrunk input.
pub fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new(config).run(&strategy, test).map_err(|e| e.to_string())
}

pub fn peaks(cases: u32) -> Result<(), String> {
    check(
        cases,
        (grid(), 1usize..4, 1usize..4, 1usize..6),
        |(rows, fr, br, cap)| {
            let params = PeakParams {
                frame_radius: fr,
                bin_radius: br,
                max_per_frame: cap,
                floor: 1e-6,
            };
            let fast: Vec<(u32, u16)> = extract_peaks(&Spectrogram::from_rows(&rows), &params)
                .iter()
                .map(|p| (p.frame, p.bin))
                .collect();
            prop_assert_eq!(fast, brute_peaks(&rows, &params));
            Ok(())
        },
    )
}

pub fn pairing(cases: u32) -> Result<(), String> {
    check(
        cases,
        (peak_set(), 1usize..5, 1u16..64, 0u16..32),
        |(peaks, fan_out, dt_max, df_max)| {
            let params = PairingParams {
                fan_out,
                dt_max,
                df_max,
            };
            prop_assert_eq!(pair_landmarks(&peaks, &params), brute_pairs(&peaks, &params));
            Ok(())
        },
    )
}

pub fn dedupe(cases: u32) -> Result<(), String> {
    check(cases, raw_list(), |(raw, totals)| {
        let d = dedupe_offsets(&raw, |id| totals[id[1..].parse::<usize>().unwrap()]);
        let fast: Vec<(usize, i64, u32)> = d
            .list
            .candidates
            .iter()
            .map(|c| (c.candidate_index, c.offset_frames, c.l))
            .collect();
        prop_assert_eq!(&fast, &brute_dedupe(&raw, &totals));
        for c in &d.list.candidates {
            prop_assert_eq!(c.p, c.l as f64 / totals[c.candidate_index] as f64);
        }
        prop_assert_eq!(d.losers.len() + fast.len(), raw.groups.len());
        Ok(())
    })
}

pub fn components(cases: u32) -> Result<(), String> {
    check(cases, edge_lists(50), |(n, edges)| {
        let g = graph_of(n, &lists_from(n, &edges));
        let mut reach = vec![vec![false; n]; n];
        for (v, row) in reach.iter_mut().enumerate() {
            row[v] = true;
        }
        for e in g.edges() {
            reach[e.a][e.b] = true;
            reach[e.b][e.a] = true;
        }
        for k in 0..n {
            for i in 0..n {
                if reach[i][k] {
                    for j in 0..n {
                        if reach[k][j] {
                            reach[i][j] = true;
                        }
                    }
                }
            }
        }
        let mut classes: BTreeSet<Vec<usize>> = BTreeSet::new();
        for row in &reach {
            classes.insert((0..n).filter(|&j| row[j]).collect());
        }
        let mut expected: Vec<Vec<usize>> = classes.iter().filter(|c| c.len() > 1).cloned().collect();
        expected.sort_by_key(|c| c[0]);
        let unmatched: Vec<usize> = classes
            .iter()
            .filter(|c| c.len() == 1)
            .map(|c| c[0])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let got = connected_components(&g);
        prop_assert_eq!(got.clusters, expected);
        prop_assert_eq!(got.unmatched, unmatched);
        Ok(())
    })
}

pub fn query(cases: u32) -> Result<(), String> {
    let clips = prop::collection::vec(prop::collection::vec(landmark(), 0..60), 1..=5);
    let external = prop::collection::vec(landmark(), 0..60);
    check(cases, (clips, external, 1u32..5), |(clips, external, t_l)| {
        let fps: Vec<Fingerprint> = clips
            .into_iter()
            .enumerate()
            .map(|(i, l)| Fingerprint::new(format!("s{i}"), l))
            .collect();
        let mut db = MatchDb::new();
        for fp in &fps {
            db.insert(fp.clone()).unwrap();
        }
        let queries = fps.iter().cloned().chain([Fingerprint::new("outside", external)]);
        for q in queries {
            let fast: Vec<(usize, i64, u32)> = db
                .query(&q, t_l)
                .unwrap()
                .groups
                .iter()
                .map(|g| (g.candidate_index, g.offset_frames, g.l))
                .collect();
            prop_assert_eq!(fast, brute_query(&fps, &q, t_l));
        }
        Ok(())
    })
}

pub fn scores(cases: u32) -> Result<(), String> {
    check(cases, edge_lists(20), |(n, edges)| {
        let lists = lists_from(n, &edges);
        let g = graph_of(n, &lists);
        // evidence per unordered pair: the larger of the two directions
        let mut pair_l: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        for (q, list) in lists.iter().enumerate() {
            for c in &list.candidates {
                let key = (q.min(c.candidate_index), q.max(c.candidate_index));
                let e = pair_l.entry(key).or_default();
                *e = (*e).max(c.l);
            }
        }
        for v in 0..n {
            let direct: u64 = pair_l
                .iter()
                .filter(|((a, b), _)| *a == v || *b == v)
                .map(|(_, &l)| l as u64)
                .sum();
            let degree = pair_l.keys().filter(|(a, b)| *a == v || *b == v).count();
            prop_assert_eq!(score_proposed(v, &g), direct);
            prop_assert_eq!(score_km(v, &g), degree);
        }
        Ok(())
    })
}

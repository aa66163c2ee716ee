//! The match filter on fixed traces and random match-fraction sequences.

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use clipgraph::filtering::{classify, filter_matches, DropEdge, FilterParams, MatchCandidate, MatchingList, Reason};

fn check<S: Strategy>(
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

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn params(t_d: f64) -> FilterParams {
    FilterParams {
        t_d,
        ..FilterParams::default()
    }
}

fn list(p: &[f64]) -> MatchingList {
    MatchingList {
        query_id: "q".into(),
        candidates: p
            .iter()
            .enumerate()
            .map(|(i, &p)| MatchCandidate {
                candidate_id: format!("c{i}"),
                candidate_index: i,
                l: 5 + (p * 1000.0) as u32,
                offset_frames: 0,
                t: 1000,
                p,
            })
            .collect(),
    }
}

fn accepted(p: &[f64], params: &FilterParams) -> usize {
    filter_matches(&list(p), params).n()
}

pub const TRACE: [f64; 8] = [0.50, 0.48, 0.40, 0.35, 0.30, 0.28, 0.27, 0.02];

pub fn worked_trace() -> Result<(), String> {
    let n = accepted(&TRACE, &FilterParams::default());
    ensure(n == 7, || format!("trace accepted {n} of 8"))?;
    use Reason::*;
    let reasons: Vec<Reason> = classify(&TRACE, &FilterParams::default())
        .into_iter()
        .map(|(_, r)| r)
        .collect();
    let expected = [
        AboveAvg,
        AboveAvg,
        AboveAvg,
        AboveAvg,
        BelowAvgBeforeDrop,
        BelowAvgBeforeDrop,
        DropEdge,
        AfterDrop,
    ];
    ensure(reasons == expected, || format!("trace reasons {reasons:?}"))
}

pub fn all_equal() -> Result<(), String> {
    for n in 1..10 {
        let got = accepted(&vec![0.3; n], &FilterParams::default());
        ensure(got == n, || format!("{n} equal entries kept {got}"))?;
    }
    Ok(())
}

pub fn single_candidate() -> Result<(), String> {
    for p in [0.0, 0.001, 0.5, 1.0] {
        let one = list(&[p]);
        ensure(filter_matches(&one, &FilterParams::default()) == one, || {
            format!("single candidate {p} changed")
        })?;
    }
    Ok(())
}

pub fn drop_edge_readings() -> Result<(), String> {
    let literal = accepted(&[0.9, 0.1], &FilterParams::default());
    let strict = accepted(
        &[0.9, 0.1],
        &FilterParams {
            drop_edge: DropEdge::Strict,
            ..FilterParams::default()
        },
    );
    ensure((literal, strict) == (2, 1), || {
        format!("literal kept {literal}, strict kept {strict}")
    })
}

fn sorted_p() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, 0..25).prop_map(|mut v| {
        v.sort_by(|a, b| b.total_cmp(a));
        v
    })
}

pub fn prefix(cases: u32) -> Result<(), String> {
    check(
        cases,
        (sorted_p(), -0.5f64..-0.001, any::<bool>()),
        |(p, t_d, strict)| {
            let params = FilterParams {
                t_d,
                drop_edge: if strict { DropEdge::Strict } else { DropEdge::Literal },
                ..FilterParams::default()
            };
            let input = list(&p);
            let out = filter_matches(&input, &params);
            prop_assert!(out.n() <= input.n());
            prop_assert_eq!(&out.candidates[..], &input.candidates[..out.n()]);
            prop_assert_eq!(p.is_empty(), out.n() == 0);
            Ok(())
        },
    )
}

pub fn monotone_in_t_d(cases: u32) -> Result<(), String> {
    check(cases, (sorted_p(), -0.5f64..-0.001, -0.5f64..-0.001), |(p, a, b)| {
        let (loose, steep) = if a >= b { (a, b) } else { (b, a) };
        prop_assert!(accepted(&p, &params(steep)) >= accepted(&p, &params(loose)));
        Ok(())
    })
}

pub fn above_average_survive(cases: u32) -> Result<(), String> {
    check(cases, (sorted_p(), -0.5f64..-0.001), |(p, t_d)| {
        let n = accepted(&p, &params(t_d));
        if !p.is_empty() {
            let avg = p.iter().sum::<f64>() / p.len() as f64;
            let above = p.iter().filter(|&&x| x >= avg - 1e-12).count();
            prop_assert!(above >= 1);
            prop_assert!(n >= above);
        }
        Ok(())
    })
}

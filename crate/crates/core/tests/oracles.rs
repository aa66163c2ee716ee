#[path = "suites/oracles.rs"]
mod suite;

#[test]
fn peaks_match_brute_force() {
    suite::peaks(200).unwrap();
}

#[test]
fn pairing_matches_brute_force() {
    suite::pairing(200).unwrap();
}

#[test]
fn query_matches_all_pairs_comparison() {
    suite::query(50).unwrap();
}

#[test]
fn dedupe_matches_group_by_argmax() {
    suite::dedupe(200).unwrap();
}

#[test]
fn components_match_reachability() {
    suite::components(200).unwrap();
}

#[test]
fn landmark_score_is_direct_sum() {
    suite::scores(100).unwrap();
}

#[path = "suites/filter_rule.rs"]
mod suite;

#[test]
fn worked_trace_drops_the_tail() {
    suite::worked_trace().unwrap();
}

#[test]
fn all_equal_accepts_everything() {
    suite::all_equal().unwrap();
}

#[test]
fn single_candidate_is_identity() {
    suite::single_candidate().unwrap();
}

#[test]
fn drop_edge_readings_differ_on_two_candidates() {
    suite::drop_edge_readings().unwrap();
}

#[test]
fn output_is_a_prefix() {
    suite::prefix(500).unwrap();
}

#[test]
fn stricter_slope_never_shrinks() {
    suite::monotone_in_t_d(500).unwrap();
}

#[test]
fn above_average_always_survive() {
    suite::above_average_survive(500).unwrap();
}

use ftg_testkit::golden::{check_checkpoint, check_jsonl, check_rendering, check_verbalization};

#[test]
fn verbalization_matches_golden() {
    check_verbalization().unwrap();
}

#[test]
fn instruction_rendering_matches_golden() {
    check_rendering().unwrap();
}

#[test]
fn jsonl_matches_golden_and_reads_back() {
    check_jsonl().unwrap();
}

#[test]
fn checkpoints_match_golden_and_round_trip() {
    check_checkpoint().unwrap();
}

use ftg_testkit::checks::{
    check_contexts, check_metrics, check_prune, check_ranks, check_subset_chain,
    check_surrogate_pipeline, fixture, Check,
};

fn all(f: impl Fn(&ftg_core::kg::KnowledgeGraph, &ftg_core::kge::EmbeddingModel) -> Check) {
    let (kg, models) = fixture();
    assert!(kg.num_entities() <= 50);
    for m in &models {
        let n = f(&kg, m).unwrap();
        assert!(n > 0);
    }
}

#[test]
fn filtered_ranks_match_exhaustive_scoring() {
    all(check_ranks);
}

#[test]
fn pruning_matches_naive_scan() {
    all(check_prune);
}

#[test]
fn contexts_match_naive_serialization() {
    all(check_contexts);
}

#[test]
fn metrics_match_hand_recomputation() {
    all(check_metrics);
}

#[test]
fn surrogate_pipeline_matches_recomputation() {
    all(check_surrogate_pipeline);
}

#[test]
fn subset_chain_holds_on_fixture() {
    all(check_subset_chain);
}

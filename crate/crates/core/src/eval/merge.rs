//! Total order over entities from generator output plus the filter ranking.

use serde::{Deserialize, Serialize};

use crate::filter::{CandidateSet, FilteredRanking};
use crate::kg::EntityId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Generated,
    CandidateTail,
    FilterTail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedPrediction {
    pub order: Vec<EntityId>,
    pub provenance: Vec<Provenance>,
    /// 1-based rank of the target in `order`.
    pub target_rank: usize,
}

/// Candidate positions chosen by the generator, first occurrence only.
pub fn dedup_generated(parsed: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    for &i in parsed {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

/// Generated candidates, then the rest of the candidates, then every other
/// filtered entity, each in filter order. `parsed` holds candidate positions.
pub fn merge_ranking(
    parsed: &[usize],
    cset: &CandidateSet,
    ranking: &FilteredRanking,
) -> RankedPrediction {
    let gen = dedup_generated(parsed);
    let mut order = Vec::with_capacity(ranking.entries.len());
    let mut provenance = Vec::with_capacity(ranking.entries.len());
    for &i in &gen {
        order.push(cset.candidates[i].0);
        provenance.push(Provenance::Generated);
    }
    for (i, c) in cset.candidates.iter().enumerate() {
        if !gen.contains(&i) {
            order.push(c.0);
            provenance.push(Provenance::CandidateTail);
        }
    }
    for &(e, _) in &ranking.entries {
        if !cset.contains(e) {
            order.push(e);
            provenance.push(Provenance::FilterTail);
        }
    }
    let target = ranking.entries[ranking.target_rank - 1].0;
    let target_rank = order
        .iter()
        .position(|&e| e == target)
        .map_or(order.len(), |p| p + 1);
    RankedPrediction {
        order,
        provenance,
        target_rank,
    }
}

/// Target rank of [`merge_ranking`] without building the order.
pub fn merged_target_rank(
    parsed: &[usize],
    cset: &CandidateSet,
    ranking: &FilteredRanking,
) -> usize {
    let gen = dedup_generated(parsed);
    let target = ranking.entries[ranking.target_rank - 1].0;
    if let Some(p) = gen.iter().position(|&i| cset.candidates[i].0 == target) {
        return p + 1;
    }
    if let Some(p) = cset.candidates.iter().position(|c| c.0 == target) {
        let skipped = gen.iter().filter(|&&i| i < p).count();
        return gen.len() + (p - skipped) + 1;
    }
    let before = ranking.entries[..ranking.target_rank - 1]
        .iter()
        .filter(|(e, _)| !cset.contains(*e))
        .count();
    cset.candidates.len() + before + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::Query;
    use crate::kg::Direction;

    fn fixture(target: EntityId) -> (CandidateSet, FilteredRanking) {
        let entries: Vec<(EntityId, f32)> = (1..=8).map(|e| (e, 10.0 - e as f32)).collect();
        let ranking = FilteredRanking {
            target_rank: entries.iter().position(|e| e.0 == target).unwrap() + 1,
            entries: entries.clone(),
        };
        let cset = CandidateSet {
            query: Query {
                id: "q".into(),
                direction: Direction::Tail,
                anchor: 0,
                relation: 0,
                target: Some(target),
                split: None,
            },
            candidates: entries[..5].to_vec(),
            k: 5,
            target_in_topk: ranking.target_rank <= 5,
            raw_target_rank: Some(ranking.target_rank),
            forced_inclusion: false,
        };
        (cset, ranking)
    }

    #[test]
    fn hand_traced_merge() {
        let (cset, ranking) = fixture(4);
        // generator names c3 then c1
        let m = merge_ranking(&[2, 0], &cset, &ranking);
        assert_eq!(&m.order[..5], &[3, 1, 2, 4, 5]);
        assert_eq!(&m.order[5..], &[6, 7, 8]);
        assert_eq!(m.provenance[0], Provenance::Generated);
        assert_eq!(m.provenance[2], Provenance::CandidateTail);
        assert_eq!(m.provenance[7], Provenance::FilterTail);
        assert_eq!(m.target_rank, 4);
    }

    #[test]
    fn fast_rank_matches_full_merge() {
        for target in 1..=8 {
            let (cset, ranking) = fixture(target);
            for parsed in [vec![], vec![0], vec![4, 1, 4], vec![3, 2, 1, 0, 4]] {
                let full = merge_ranking(&parsed, &cset, &ranking);
                assert_eq!(
                    merged_target_rank(&parsed, &cset, &ranking),
                    full.target_rank
                );
                let mut sorted = full.order.clone();
                sorted.sort();
                assert_eq!(sorted, (1..=8).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn echo_first_candidate_is_identity() {
        for target in 1..=8 {
            let (cset, ranking) = fixture(target);
            let m = merge_ranking(&[0], &cset, &ranking);
            assert_eq!(
                m.order,
                ranking.entries.iter().map(|e| e.0).collect::<Vec<_>>()
            );
            assert_eq!(m.target_rank, ranking.target_rank);
        }
    }
}

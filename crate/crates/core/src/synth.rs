//! Deterministic synthetic knowledge graphs for desk-scale experiments.
//!
//! Two families are provided:
//!
//! * [`ModularFamily`]: every relation is a modular successor family
//!   `t = h + shift + c (mod n)` for `c` in `0..fanout`. Relations compose by
//!   adding shifts, which rotation and translation models can represent, so
//!   trained filters reach nontrivial Hits@10.
//! * [`NeighborhoodSpec`]: a graph whose query relation (`favorite`) points at
//!   the one item already linked to the person through a per-person hint
//!   relation. Items form a cycle under every hint relation, which pins the
//!   hints to distinct rotations: a rotation model lands on *an* item but
//!   cannot tell which, while the one-hop neighborhood names it outright.
//!
//! Splits of the modular family use `train = floor(0.8 n)`,
//! `valid = floor(0.1 n)`, `test = n - train - valid` over a seeded shuffle.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Triple, Vocab};
use crate::seed;

/// Generating rule of one modular relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModularRule {
    pub shift: usize,
    pub fanout: usize,
}

impl ModularRule {
    pub fn holds(&self, n_entities: usize, head: usize, tail: usize) -> bool {
        let offset = (tail + 2 * n_entities - head - self.shift % n_entities) % n_entities;
        offset < self.fanout
    }
}

#[derive(Debug, Clone)]
pub struct ModularFamily {
    pub seed: u64,
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_triples: usize,
    pub rules: Vec<ModularRule>,
}

impl ModularFamily {
    pub fn new(seed: u64, n_entities: usize, n_relations: usize, n_triples: usize) -> Result<Self> {
        if n_entities < 4 || n_relations < 1 || n_triples < n_entities {
            return Err(Error::InfeasibleSynthetic(format!(
                "need n_entities >= 4, n_relations >= 1, n_triples >= n_entities \
                 (got {n_entities}, {n_relations}, {n_triples})"
            )));
        }
        let capacity = n_entities
            .checked_mul(n_entities)
            .and_then(|x| x.checked_mul(n_relations));
        if capacity.is_none_or(|c| n_triples > c) {
            return Err(Error::InfeasibleSynthetic(format!(
                "{n_triples} triples requested but only {} distinct triples exist",
                capacity.map_or("too many".to_string(), |c| c.to_string())
            )));
        }
        let per_pair = n_entities * n_relations;
        let fanout = n_triples.div_ceil(per_pair).clamp(1, n_entities);

        let mut rng = seed::stage_rng(seed, "synthetic/rules");
        let mut shifts: Vec<usize> = (1..n_entities).collect();
        shifts.shuffle(&mut rng);
        let rules = (0..n_relations)
            .map(|r| ModularRule {
                shift: if r < shifts.len() {
                    shifts[r]
                } else {
                    rng.gen_range(1..n_entities)
                },
                fanout,
            })
            .collect();
        Ok(Self {
            seed,
            n_entities,
            n_relations,
            n_triples,
            rules,
        })
    }

    pub fn build(&self) -> Result<KnowledgeGraph> {
        let n = self.n_entities;
        let mut pool: Vec<Triple> = Vec::with_capacity(n * self.n_relations * self.rules[0].fanout);
        for (r, rule) in self.rules.iter().enumerate() {
            for h in 0..n {
                for c in 0..rule.fanout {
                    pool.push(Triple::new(h, r, (h + rule.shift + c) % n));
                }
            }
        }
        let mut rng = seed::stage_rng(self.seed, "synthetic/sample");
        let (chosen, _) = pool.partial_shuffle(&mut rng, self.n_triples);
        let chosen = chosen.to_vec();

        let n_train = self.n_triples * 8 / 10;
        let n_valid = self.n_triples / 10;
        let train = chosen[..n_train].to_vec();
        let valid = chosen[n_train..n_train + n_valid].to_vec();
        let test = chosen[n_train + n_valid..].to_vec();

        let entities = Vocab::from_names((0..n).map(|i| format!("e{i}")).collect());
        let relations = Vocab::from_names((0..self.n_relations).map(|i| format!("r{i}")).collect());
        KnowledgeGraph::from_ids(entities, relations, train, valid, test)
    }
}

/// Modular-successor synthetic graph; see [`ModularFamily`].
pub fn synthetic_kg(
    seed: u64,
    n_entities: usize,
    n_relations: usize,
    n_triples: usize,
) -> Result<KnowledgeGraph> {
    ModularFamily::new(seed, n_entities, n_relations, n_triples)?.build()
}

/// Parameters of the neighborhood-disambiguation graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeighborhoodSpec {
    pub seed: u64,
    pub n_persons: usize,
    pub n_items: usize,
    pub n_hints: usize,
    /// Random `knows` edges per person. They put unrelated persons into every
    /// neighborhood and dilute the pooled graph token.
    pub knows_per_person: usize,
    /// Percent of persons whose `favorite` triple is in train.
    pub train_pct: usize,
    /// Percent in valid; the remaining persons go to test.
    pub valid_pct: usize,
}

impl Default for NeighborhoodSpec {
    fn default() -> Self {
        Self {
            seed: 11,
            n_persons: 600,
            n_items: 16,
            n_hints: 6,
            knows_per_person: 0,
            train_pct: 50,
            valid_pct: 30,
        }
    }
}

/// Relation id of `favorite` in graphs built by [`neighborhood_kg`].
pub const FAVORITE: usize = 0;

/// Builds the neighborhood-disambiguation graph. Persons are assigned to
/// train/valid/test by `train_pct`/`valid_pct`; only `favorite` triples of
/// valid and test persons leave the train split.
pub fn neighborhood_kg(spec: &NeighborhoodSpec) -> Result<KnowledgeGraph> {
    let NeighborhoodSpec {
        seed,
        n_persons,
        n_items,
        n_hints,
        knows_per_person,
        train_pct,
        valid_pct,
    } = *spec;
    if train_pct + valid_pct > 100 {
        return Err(Error::InfeasibleSynthetic(
            "train_pct + valid_pct exceeds 100".into(),
        ));
    }
    if n_persons < 10 || n_hints < 1 || n_items < n_hints + 2 {
        return Err(Error::InfeasibleSynthetic(
            "need n_persons >= 10, n_hints >= 1, n_items >= n_hints + 2".into(),
        ));
    }
    if knows_per_person >= n_persons {
        return Err(Error::InfeasibleSynthetic(
            "knows_per_person must be below n_persons".into(),
        ));
    }
    let person = |i: usize| i;
    let item = |j: usize| n_persons + j;

    let mut names: Vec<String> = (0..n_persons).map(|i| format!("p{i}")).collect();
    names.extend((0..n_items).map(|j| format!("i{j}")));
    let mut rel_names = vec!["favorite".to_string()];
    rel_names.extend((0..n_hints).map(|j| format!("hint{j}")));
    rel_names.push("knows".to_string());
    let hint = |j: usize| 1 + j;
    let knows = 1 + n_hints;

    let mut rng = seed::stage_rng(seed, "neighborhood");
    let mut train = Vec::new();
    let mut shifts: Vec<usize> = (1..n_items).collect();
    shifts.shuffle(&mut rng);
    for (j, &s) in shifts.iter().take(n_hints).enumerate() {
        for x in 0..n_items {
            train.push(Triple::new(item(x), hint(j), item((x + s) % n_items)));
        }
    }

    let mut order: Vec<usize> = (0..n_persons).collect();
    order.shuffle(&mut rng);
    let n_train = n_persons * train_pct / 100;
    let n_valid = n_persons * valid_pct / 100;
    let mut valid = Vec::new();
    let mut test = Vec::new();
    for (pos, &p) in order.iter().enumerate() {
        let fav = rng.gen_range(0..n_items);
        let j = rng.gen_range(0..n_hints);
        train.push(Triple::new(person(p), hint(j), item(fav)));
        let fav_triple = Triple::new(person(p), FAVORITE, item(fav));
        if pos < n_train {
            train.push(fav_triple);
        } else if pos < n_train + n_valid {
            valid.push(fav_triple);
        } else {
            test.push(fav_triple);
        }
        let mut friends = Vec::with_capacity(knows_per_person);
        while friends.len() < knows_per_person {
            let q = rng.gen_range(0..n_persons);
            if q != p && !friends.contains(&q) {
                friends.push(q);
            }
        }
        for q in friends {
            train.push(Triple::new(person(p), knows, person(q)));
        }
    }
    KnowledgeGraph::from_ids(
        Vocab::from_names(names),
        Vocab::from_names(rel_names),
        train,
        valid,
        test,
    )
}

//! Knowledge graph storage: dense id tables, split triple lists, train-only
//! adjacency and the all-split truth indices used by filtered ranking.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type EntityId = usize;
pub type RelationId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub const fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// Which side of a triple a query asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `(anchor, relation, ?)`
    Tail,
    /// `(?, relation, anchor)`
    Head,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Tail => "tail",
            Direction::Head => "head",
        }
    }
}

/// Bidirectional name <-> dense id table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_names(names: Vec<String>) -> Self {
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            index.entry(n.clone()).or_insert(i);
        }
        Self { names, index }
    }

    fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// An immutable, fully indexed knowledge graph.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Vocab,
    relations: Vocab,
    train: Vec<Triple>,
    valid: Vec<Triple>,
    test: Vec<Triple>,
    out_adj: Vec<Vec<(RelationId, EntityId)>>,
    in_adj: Vec<Vec<(RelationId, EntityId)>>,
    true_tails: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    true_heads: HashMap<(RelationId, EntityId), Vec<EntityId>>,
    duplicates_dropped: usize,
}

pub type LabeledTriple = (String, String, String);

impl KnowledgeGraph {
    /// Builds a graph from name triples. Ids are assigned by first appearance
    /// across train, then valid, then test.
    pub fn from_labeled(
        train: &[LabeledTriple],
        valid: &[LabeledTriple],
        test: &[LabeledTriple],
    ) -> Result<Self> {
        let mut entities = Vocab::default();
        let mut relations = Vocab::default();
        let mut convert = |rows: &[LabeledTriple]| -> Vec<Triple> {
            rows.iter()
                .map(|(h, r, t)| {
                    let h = entities.intern(h);
                    let r = relations.intern(r);
                    let t = entities.intern(t);
                    Triple::new(h, r, t)
                })
                .collect()
        };
        let train = convert(train);
        let valid = convert(valid);
        let test = convert(test);
        Self::from_ids(entities, relations, train, valid, test)
    }

    /// Builds a graph over pre-assigned ids. Duplicate triples within a split
    /// are dropped (first occurrence kept).
    pub fn from_ids(
        entities: Vocab,
        relations: Vocab,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyTrainSplit);
        }
        let n_e = entities.len();
        let n_r = relations.len();
        let mut duplicates_dropped = 0;
        let mut dedup = |rows: Vec<Triple>| -> Result<Vec<Triple>> {
            let mut seen = HashSet::with_capacity(rows.len());
            let mut out = Vec::with_capacity(rows.len());
            for t in rows {
                check_range("entity", t.head, n_e)?;
                check_range("relation", t.relation, n_r)?;
                check_range("entity", t.tail, n_e)?;
                if seen.insert(t) {
                    out.push(t);
                } else {
                    duplicates_dropped += 1;
                }
            }
            Ok(out)
        };
        let train = dedup(train)?;
        let valid = dedup(valid)?;
        let test = dedup(test)?;

        let (out_adj, in_adj) = build_adjacency(n_e, &train);
        let (true_tails, true_heads) = build_truth(train.iter().chain(&valid).chain(&test));

        Ok(Self {
            entities,
            relations,
            train,
            valid,
            test,
            out_adj,
            in_adj,
            true_tails,
            true_heads,
            duplicates_dropped,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        self.entities.name(id)
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        self.relations.name(id)
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn train(&self) -> &[Triple] {
        &self.train
    }

    pub fn valid(&self) -> &[Triple] {
        &self.valid
    }

    pub fn test(&self) -> &[Triple] {
        &self.test
    }

    /// Outgoing train edges of `head` as `(relation, tail)`, sorted.
    pub fn out_edges(&self, head: EntityId) -> &[(RelationId, EntityId)] {
        &self.out_adj[head]
    }

    /// Incoming train edges of `tail` as `(relation, head)`, sorted.
    pub fn in_edges(&self, tail: EntityId) -> &[(RelationId, EntityId)] {
        &self.in_adj[tail]
    }

    /// Known tails of `(head, relation)` over all splits, sorted ascending.
    pub fn true_tails(&self, head: EntityId, relation: RelationId) -> &[EntityId] {
        self.true_tails
            .get(&(head, relation))
            .map_or(&[], Vec::as_slice)
    }

    /// Known heads of `(relation, tail)` over all splits, sorted ascending.
    pub fn true_heads(&self, relation: RelationId, tail: EntityId) -> &[EntityId] {
        self.true_heads
            .get(&(relation, tail))
            .map_or(&[], Vec::as_slice)
    }

    pub fn is_train_triple(&self, t: Triple) -> bool {
        self.out_adj[t.head]
            .binary_search(&(t.relation, t.tail))
            .is_ok()
    }

    pub fn duplicates_dropped(&self) -> usize {
        self.duplicates_dropped
    }

    pub fn check_entity(&self, id: EntityId) -> Result<()> {
        check_range("entity", id, self.num_entities())
    }

    pub fn check_relation(&self, id: RelationId) -> Result<()> {
        check_range("relation", id, self.num_relations())
    }

    /// Train degree of every entity: each train triple counts once for its head
    /// and once for its tail.
    pub fn train_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.num_entities()];
        for t in &self.train {
            deg[t.head] += 1;
            deg[t.tail] += 1;
        }
        deg
    }

    /// Rebuilds every index from the raw split lists. Used to verify the
    /// stored indices.
    pub fn rebuilt_indices(&self) -> RebuiltIndices {
        let (out_adj, in_adj) = build_adjacency(self.num_entities(), &self.train);
        let (true_tails, true_heads) =
            build_truth(self.train.iter().chain(&self.valid).chain(&self.test));
        RebuiltIndices {
            out_adj,
            in_adj,
            true_tails,
            true_heads,
        }
    }

    pub fn indices_match(&self, other: &RebuiltIndices) -> bool {
        self.out_adj == other.out_adj
            && self.in_adj == other.in_adj
            && self.true_tails == other.true_tails
            && self.true_heads == other.true_heads
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RebuiltIndices {
    pub out_adj: Vec<Vec<(RelationId, EntityId)>>,
    pub in_adj: Vec<Vec<(RelationId, EntityId)>>,
    pub true_tails: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    pub true_heads: HashMap<(RelationId, EntityId), Vec<EntityId>>,
}

fn check_range(kind: &'static str, id: usize, size: usize) -> Result<()> {
    if id < size {
        Ok(())
    } else {
        Err(Error::IdOutOfRange { kind, id, size })
    }
}

type Adjacency = Vec<Vec<(RelationId, EntityId)>>;

fn build_adjacency(n_entities: usize, train: &[Triple]) -> (Adjacency, Adjacency) {
    let mut out_adj = vec![Vec::new(); n_entities];
    let mut in_adj = vec![Vec::new(); n_entities];
    for t in train {
        out_adj[t.head].push((t.relation, t.tail));
        in_adj[t.tail].push((t.relation, t.head));
    }
    for list in out_adj.iter_mut().chain(in_adj.iter_mut()) {
        list.sort_unstable();
        list.dedup();
    }
    (out_adj, in_adj)
}

type TruthMaps = (
    HashMap<(EntityId, RelationId), Vec<EntityId>>,
    HashMap<(RelationId, EntityId), Vec<EntityId>>,
);

fn build_truth<'a>(triples: impl Iterator<Item = &'a Triple>) -> TruthMaps {
    let mut tails: HashMap<(EntityId, RelationId), Vec<EntityId>> = HashMap::new();
    let mut heads: HashMap<(RelationId, EntityId), Vec<EntityId>> = HashMap::new();
    for t in triples {
        tails.entry((t.head, t.relation)).or_default().push(t.tail);
        heads.entry((t.relation, t.tail)).or_default().push(t.head);
    }
    for v in tails.values_mut().chain(heads.values_mut()) {
        v.sort_unstable();
        v.dedup();
    }
    (tails, heads)
}

/// Parses one `head<TAB>relation<TAB>tail` file.
pub fn read_tsv(path: &Path) -> Result<Vec<LabeledTriple>> {
    let text = fs::read_to_string(path)?;
    parse_tsv(&text, path)
}

fn parse_tsv(text: &str, path: &Path) -> Result<Vec<LabeledTriple>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::MalformedLine {
                path: path.to_path_buf(),
                line: i + 1,
                found: fields.len(),
            });
        }
        rows.push((
            fields[0].to_owned(),
            fields[1].to_owned(),
            fields[2].to_owned(),
        ));
    }
    Ok(rows)
}

/// Loads the three benchmark split files.
pub fn load_tsv(train: &Path, valid: &Path, test: &Path) -> Result<KnowledgeGraph> {
    let train = read_tsv(train)?;
    let valid = read_tsv(valid)?;
    let test = read_tsv(test)?;
    KnowledgeGraph::from_labeled(&train, &valid, &test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgStats {
    pub entities: usize,
    pub relations: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub mean_degree: f64,
    pub median_degree: f64,
}

/// Counts plus mean/median train degree over all registered entities.
pub fn kg_stats(kg: &KnowledgeGraph) -> KgStats {
    let mut deg = kg.train_degrees();
    let n = deg.len();
    let mean = deg.iter().sum::<usize>() as f64 / n as f64;
    deg.sort_unstable();
    let median = if n % 2 == 1 {
        deg[n / 2] as f64
    } else {
        (deg[n / 2 - 1] + deg[n / 2]) as f64 / 2.0
    };
    KgStats {
        entities: kg.num_entities(),
        relations: kg.num_relations(),
        train: kg.train().len(),
        valid: kg.valid().len(),
        test: kg.test().len(),
        mean_degree: mean,
        median_degree: median,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lab(rows: &[(&str, &str, &str)]) -> Vec<LabeledTriple> {
        rows.iter()
            .map(|(h, r, t)| (h.to_string(), r.to_string(), t.to_string()))
            .collect()
    }

    #[test]
    fn one_line_train_file() {
        let kg = KnowledgeGraph::from_labeled(&lab(&[("a", "r", "b")]), &[], &[]).unwrap();
        assert_eq!(kg.num_entities(), 2);
        assert_eq!(kg.num_relations(), 1);
        let a = kg.entities().id("a").unwrap();
        let b = kg.entities().id("b").unwrap();
        assert_eq!(kg.true_tails(a, 0), &[b]);
    }

    #[test]
    fn ids_follow_first_appearance_across_splits() {
        let kg = KnowledgeGraph::from_labeled(
            &lab(&[("x", "p", "y")]),
            &lab(&[("z", "q", "x")]),
            &lab(&[("w", "p", "y")]),
        )
        .unwrap();
        assert_eq!(kg.entities().names(), &["x", "y", "z", "w"]);
        assert_eq!(kg.relations().names(), &["p", "q"]);
        // valid/test-only entities are registered but have no adjacency
        assert!(kg.out_edges(3).is_empty());
        assert_eq!(kg.true_heads(0, 1), &[0, 3]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_tsv("a\tr\tb\nbad line\n", Path::new("train.txt")).unwrap_err();
        match err {
            Error::MalformedLine { line, found, .. } => {
                assert_eq!(line, 2);
                assert_eq!(found, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_train_is_an_error() {
        let err = KnowledgeGraph::from_labeled(&[], &lab(&[("a", "r", "b")]), &[]).unwrap_err();
        assert!(matches!(err, Error::EmptyTrainSplit));
    }

    #[test]
    fn duplicates_within_a_split_are_dropped() {
        let kg = KnowledgeGraph::from_labeled(
            &lab(&[("a", "r", "b"), ("a", "r", "b"), ("b", "r", "a")]),
            &[],
            &[],
        )
        .unwrap();
        assert_eq!(kg.train().len(), 2);
        assert_eq!(kg.duplicates_dropped(), 1);
    }

    #[test]
    fn single_triple_degrees() {
        let kg = KnowledgeGraph::from_labeled(&lab(&[("a", "r", "b")]), &[], &[]).unwrap();
        assert_eq!(kg.train_degrees(), vec![1, 1]);
        let s = kg_stats(&kg);
        assert_eq!(s.mean_degree, 1.0);
        assert_eq!(s.median_degree, 1.0);
    }

    #[test]
    fn adjacency_excludes_valid_and_test() {
        let kg = KnowledgeGraph::from_labeled(
            &lab(&[("a", "r", "b")]),
            &lab(&[("a", "r", "c")]),
            &lab(&[("c", "r", "a")]),
        )
        .unwrap();
        assert_eq!(kg.out_edges(0), &[(0, 1)]);
        assert!(kg.in_edges(0).is_empty());
        assert_eq!(kg.true_tails(0, 0), &[1, 2]);
    }
}

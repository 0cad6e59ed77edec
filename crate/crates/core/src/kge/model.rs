use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{Direction, EntityId, RelationId};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    TransE,
    DistMult,
    ComplEx,
    RotatE,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::TransE,
        ModelKind::DistMult,
        ModelKind::ComplEx,
        ModelKind::RotatE,
    ];

    pub fn is_complex(self) -> bool {
        matches!(self, ModelKind::ComplEx | ModelKind::RotatE)
    }

    /// Width of a stored relation row for entity width `dim`.
    pub fn relation_width(self, dim: usize) -> usize {
        match self {
            ModelKind::RotatE => dim / 2,
            _ => dim,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::TransE => "TransE",
            ModelKind::DistMult => "DistMult",
            ModelKind::ComplEx => "ComplEx",
            ModelKind::RotatE => "RotatE",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transe" => Ok(ModelKind::TransE),
            "distmult" => Ok(ModelKind::DistMult),
            "complex" => Ok(ModelKind::ComplEx),
            "rotate" => Ok(ModelKind::RotatE),
            _ => Err(Error::Unknown {
                what: "model kind",
                name: s.to_string(),
            }),
        }
    }
}

/// Structural embeddings of a trained (or freshly initialized) filter model.
///
/// Entity rows have `dim` reals. For the complex kinds a row holds the real
/// parts in its first half and the imaginary parts in its second half.
/// RotatE relation rows hold `dim / 2` phase angles in radians, so every
/// relation is a unit-modulus rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub(crate) kind: ModelKind,
    pub(crate) n_entities: usize,
    pub(crate) n_relations: usize,
    pub(crate) dim: usize,
    pub(crate) gamma: f32,
    pub(crate) seed: u64,
    pub(crate) entity: Vec<f32>,
    pub(crate) relation: Vec<f32>,
}

impl EmbeddingModel {
    /// Seeded initialization: entity (and non-RotatE relation) entries are
    /// uniform in `±(gamma + 2) / dim`; RotatE phases are uniform in `±π`.
    pub fn init(
        kind: ModelKind,
        n_entities: usize,
        n_relations: usize,
        dim: usize,
        gamma: f32,
        seed: u64,
    ) -> Result<Self> {
        validate_shape(kind, dim, gamma)?;
        let mut rng = seed::stage_rng(seed, "kge/init");
        let range = (gamma + 2.0) / dim as f32;
        let entity = (0..n_entities * dim)
            .map(|_| rng.gen_range(-range..=range))
            .collect();
        let rel_width = kind.relation_width(dim);
        let relation = (0..n_relations * rel_width)
            .map(|_| match kind {
                ModelKind::RotatE => rng.gen_range(-std::f32::consts::PI..=std::f32::consts::PI),
                _ => rng.gen_range(-range..=range),
            })
            .collect();
        Ok(Self {
            kind,
            n_entities,
            n_relations,
            dim,
            gamma,
            seed,
            entity,
            relation,
        })
    }

    /// Wraps explicit matrices (row-major).
    pub fn from_parts(
        kind: ModelKind,
        dim: usize,
        gamma: f32,
        seed: u64,
        entity: Vec<f32>,
        relation: Vec<f32>,
    ) -> Result<Self> {
        validate_shape(kind, dim, gamma)?;
        let rel_width = kind.relation_width(dim);
        if !entity.len().is_multiple_of(dim) || !relation.len().is_multiple_of(rel_width) {
            return Err(Error::DimensionMismatch(format!(
                "matrix lengths {} / {} are not multiples of row widths {dim} / {rel_width}",
                entity.len(),
                relation.len()
            )));
        }
        if entity.iter().chain(&relation).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite embedding entry".into()));
        }
        Ok(Self {
            kind,
            n_entities: entity.len() / dim,
            n_relations: relation.len() / rel_width,
            dim,
            gamma,
            seed,
            entity,
            relation,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn n_entities(&self) -> usize {
        self.n_entities
    }

    pub fn n_relations(&self) -> usize {
        self.n_relations
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn relation_width(&self) -> usize {
        self.kind.relation_width(self.dim)
    }

    pub fn gamma(&self) -> f32 {
        self.gamma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entity_matrix(&self) -> &[f32] {
        &self.entity
    }

    pub fn relation_matrix(&self) -> &[f32] {
        &self.relation
    }

    pub fn entity_row(&self, e: EntityId) -> &[f32] {
        &self.entity[e * self.dim..(e + 1) * self.dim]
    }

    pub fn relation_row(&self, r: RelationId) -> &[f32] {
        let w = self.relation_width();
        &self.relation[r * w..(r + 1) * w]
    }

    /// Relation as a `dim`-wide real vector. RotatE phases become the unit
    /// complex rotation `[cos θ.., sin θ..]`; other kinds return the row.
    pub fn relation_vector(&self, r: RelationId) -> Vec<f64> {
        let row = self.relation_row(r);
        match self.kind {
            ModelKind::RotatE => row
                .iter()
                .map(|&p| f64::from(p).cos())
                .chain(row.iter().map(|&p| f64::from(p).sin()))
                .collect(),
            _ => row.iter().map(|&v| f64::from(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entity
            .iter()
            .chain(&self.relation)
            .all(|v| v.is_finite())
    }

    fn check_ids(&self, h: EntityId, r: RelationId, t: EntityId) -> Result<()> {
        for (kind, id, size) in [
            ("entity", h, self.n_entities),
            ("relation", r, self.n_relations),
            ("entity", t, self.n_entities),
        ] {
            if id >= size {
                return Err(Error::IdOutOfRange { kind, id, size });
            }
        }
        Ok(())
    }

    /// Plausibility of `(h, r, t)`; higher is more plausible for every kind.
    pub fn score(&self, h: EntityId, r: RelationId, t: EntityId) -> Result<f32> {
        self.check_ids(h, r, t)?;
        Ok(self.score_unchecked(h, r, t) as f32)
    }

    pub(crate) fn score_unchecked(&self, h: EntityId, r: RelationId, t: EntityId) -> f64 {
        let hv = widen(self.entity_row(h));
        let rv = widen(self.relation_row(r));
        let tv = widen(self.entity_row(t));
        score_f64(self.kind, f64::from(self.gamma), &hv, &rv, &tv)
    }

    /// Scores every entity as the missing side of a query. Entry `e` equals
    /// `score(anchor, rel, e)` for tail queries and `score(e, rel, anchor)` for
    /// head queries.
    pub fn score_all(
        &self,
        direction: Direction,
        anchor: EntityId,
        rel: RelationId,
    ) -> Result<Vec<f32>> {
        self.check_ids(anchor, rel, anchor)?;
        let a = widen(self.entity_row(anchor));
        let rv = widen(self.relation_row(rel));
        let gamma = f64::from(self.gamma);
        let d = self.dim;
        let half = d / 2;
        // Fold the anchor and relation into one query vector, then compare
        // against each candidate row.
        let out: Vec<f64> = match (self.kind, direction) {
            (ModelKind::TransE, _) => {
                let q: Vec<f64> = match direction {
                    Direction::Tail => a.iter().zip(&rv).map(|(x, y)| x + y).collect(),
                    Direction::Head => a.iter().zip(&rv).map(|(x, y)| x - y).collect(),
                };
                self.rows()
                    .map(|row| {
                        let s: f64 = match direction {
                            Direction::Tail => row
                                .iter()
                                .zip(&q)
                                .map(|(&t, q)| (q - f64::from(t)).powi(2))
                                .sum(),
                            Direction::Head => row
                                .iter()
                                .zip(&q)
                                .map(|(&h, q)| (f64::from(h) - q).powi(2))
                                .sum(),
                        };
                        -s.sqrt()
                    })
                    .collect()
            }
            (ModelKind::DistMult, _) => {
                let q: Vec<f64> = a.iter().zip(&rv).map(|(x, y)| x * y).collect();
                self.rows()
                    .map(|row| row.iter().zip(&q).map(|(&e, q)| f64::from(e) * q).sum())
                    .collect()
            }
            (ModelKind::ComplEx, Direction::Tail) => {
                // Re<h r conj(t)> = sum(a_re t_re + a_im t_im), a = h*r
                let mut q = vec![0.0; d];
                for i in 0..half {
                    let (hr, hi, rr, ri) = (a[i], a[half + i], rv[i], rv[half + i]);
                    q[i] = hr * rr - hi * ri;
                    q[half + i] = hr * ri + hi * rr;
                }
                self.rows()
                    .map(|row| row.iter().zip(&q).map(|(&e, q)| f64::from(e) * q).sum())
                    .collect()
            }
            (ModelKind::ComplEx, Direction::Head) => {
                // Re<h r conj(t)> = Re<h conj(conj(r) t)>; b = conj(r) t
                let mut q = vec![0.0; d];
                for i in 0..half {
                    let (tr, ti, rr, ri) = (a[i], a[half + i], rv[i], rv[half + i]);
                    q[i] = rr * tr + ri * ti;
                    q[half + i] = rr * ti - ri * tr;
                }
                self.rows()
                    .map(|row| row.iter().zip(&q).map(|(&e, q)| f64::from(e) * q).sum())
                    .collect()
            }
            (ModelKind::RotatE, _) => {
                // |h r - t| = |h - conj(r) t| since |r| = 1
                let mut q = vec![0.0; d];
                for i in 0..half {
                    let (c, s) = (rv[i].cos(), rv[i].sin());
                    let (xr, xi) = (a[i], a[half + i]);
                    match direction {
                        Direction::Tail => {
                            q[i] = xr * c - xi * s;
                            q[half + i] = xr * s + xi * c;
                        }
                        Direction::Head => {
                            q[i] = xr * c + xi * s;
                            q[half + i] = xi * c - xr * s;
                        }
                    }
                }
                self.rows()
                    .map(|row| {
                        let mut dist = 0.0;
                        for i in 0..half {
                            let dr = q[i] - f64::from(row[i]);
                            let di = q[half + i] - f64::from(row[half + i]);
                            dist += (dr * dr + di * di).sqrt();
                        }
                        gamma - dist
                    })
                    .collect()
            }
        };
        Ok(out.into_iter().map(|s: f64| s as f32).collect())
    }

    fn rows(&self) -> std::slice::Chunks<'_, f32> {
        self.entity.chunks(self.dim)
    }
}

fn validate_shape(kind: ModelKind, dim: usize, gamma: f32) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidConfig(
            "embedding dimension must be positive".into(),
        ));
    }
    if kind.is_complex() && !dim.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!(
            "{kind} needs an even dimension, got {dim}"
        )));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "gamma must be > 0, got {gamma}"
        )));
    }
    Ok(())
}

pub(crate) fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

/// Public scoring formula over explicit rows.
pub fn score_f64(kind: ModelKind, gamma: f64, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    match kind {
        ModelKind::TransE => -h
            .iter()
            .zip(r)
            .zip(t)
            .map(|((h, r), t)| (h + r - t).powi(2))
            .sum::<f64>()
            .sqrt(),
        ModelKind::DistMult => h.iter().zip(r).zip(t).map(|((h, r), t)| h * r * t).sum(),
        ModelKind::ComplEx => {
            let m = h.len() / 2;
            (0..m)
                .map(|i| {
                    let (hr, hi, rr, ri, tr, ti) = (h[i], h[m + i], r[i], r[m + i], t[i], t[m + i]);
                    (hr * rr - hi * ri) * tr + (hr * ri + hi * rr) * ti
                })
                .sum()
        }
        ModelKind::RotatE => {
            let m = h.len() / 2;
            let dist: f64 = (0..m)
                .map(|i| {
                    let (c, s) = (r[i].cos(), r[i].sin());
                    let u = h[i] * c - h[m + i] * s - t[i];
                    let w = h[i] * s + h[m + i] * c - t[m + i];
                    (u * u + w * w).sqrt()
                })
                .sum();
            gamma - dist
        }
    }
}

/// Training logit: `gamma - distance` for the distance models, the raw
/// similarity for the bilinear ones. Differs from [`score_f64`] only by the
/// TransE margin shift.
pub fn logit_f64(kind: ModelKind, gamma: f64, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    match kind {
        ModelKind::TransE => gamma + score_f64(kind, gamma, h, r, t),
        _ => score_f64(kind, gamma, h, r, t),
    }
}

/// Logit and its gradient with respect to the head, relation and tail rows.
pub fn logit_and_grad(
    kind: ModelKind,
    gamma: f64,
    h: &[f64],
    r: &[f64],
    t: &[f64],
) -> (f64, Vec<f64>, Vec<f64>, Vec<f64>) {
    let d = h.len();
    let mut gh = vec![0.0; d];
    let mut gr = vec![0.0; r.len()];
    let mut gt = vec![0.0; d];
    let logit = match kind {
        ModelKind::TransE => {
            let v: Vec<f64> = (0..d).map(|i| h[i] + r[i] - t[i]).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for i in 0..d {
                    let g = -v[i] / norm;
                    gh[i] = g;
                    gr[i] = g;
                    gt[i] = -g;
                }
            }
            gamma - norm
        }
        ModelKind::DistMult => {
            let mut s = 0.0;
            for i in 0..d {
                s += h[i] * r[i] * t[i];
                gh[i] = r[i] * t[i];
                gr[i] = h[i] * t[i];
                gt[i] = h[i] * r[i];
            }
            s
        }
        ModelKind::ComplEx => {
            let m = d / 2;
            let mut s = 0.0;
            for i in 0..m {
                let (hr, hi, rr, ri, tr, ti) = (h[i], h[m + i], r[i], r[m + i], t[i], t[m + i]);
                let a = hr * rr - hi * ri;
                let b = hr * ri + hi * rr;
                s += a * tr + b * ti;
                gt[i] = a;
                gt[m + i] = b;
                gh[i] = rr * tr + ri * ti;
                gh[m + i] = -ri * tr + rr * ti;
                gr[i] = hr * tr + hi * ti;
                gr[m + i] = -hi * tr + hr * ti;
            }
            s
        }
        ModelKind::RotatE => {
            let m = d / 2;
            let mut dist = 0.0;
            for i in 0..m {
                let (c, s) = (r[i].cos(), r[i].sin());
                let (hr, hi) = (h[i], h[m + i]);
                let u = hr * c - hi * s - t[i];
                let w = hr * s + hi * c - t[m + i];
                let modulus = (u * u + w * w).sqrt();
                dist += modulus;
                if modulus > 0.0 {
                    let gu = -u / modulus;
                    let gw = -w / modulus;
                    gh[i] = gu * c + gw * s;
                    gh[m + i] = -gu * s + gw * c;
                    gt[i] = -gu;
                    gt[m + i] = -gw;
                    gr[i] = gu * (-hr * s - hi * c) + gw * (hr * c - hi * s);
                }
            }
            gamma - dist
        }
    };
    (logit, gh, gr, gt)
}

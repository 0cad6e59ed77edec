//! `FTGKGE1` binary container.
//!
//! Layout: the 8 magic bytes `FTGKGE1\n`, a little-endian `u32` length `L`,
//! `L` bytes of UTF-8 JSON metadata, then one or more matrices of
//! little-endian `f32` in row-major order. Section sizes are derived from the
//! metadata.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kge::{EmbeddingModel, ModelKind};

pub const MAGIC: &[u8; 8] = b"FTGKGE1\n";

/// Serializes metadata followed by matrix sections.
pub fn encode<M: Serialize>(meta: &M, sections: &[&[f32]]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(meta)?;
    let len = u32::try_from(json.len())
        .map_err(|_| Error::Metadata("metadata longer than u32::MAX bytes".into()))?;
    let floats: usize = sections.iter().map(|s| s.len()).sum();
    let mut out = Vec::with_capacity(12 + json.len() + 4 * floats);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&json);
    for s in sections {
        for v in *s {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Splits a container into its raw metadata and the float payload.
pub fn decode_header(bytes: &[u8]) -> Result<(&[u8], &[u8])> {
    let n = bytes.len().min(MAGIC.len());
    if bytes[..n] != MAGIC[..n] {
        return Err(Error::MagicMismatch {
            expected: MAGIC.to_vec(),
            found: bytes[..n].to_vec(),
        });
    }
    if bytes.len() < 12 {
        return Err(Error::Truncated {
            expected: 12,
            actual: bytes.len(),
        });
    }
    let len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    let body = 12 + len;
    if bytes.len() < body {
        return Err(Error::Truncated {
            expected: body,
            actual: bytes.len(),
        });
    }
    Ok((&bytes[12..body], &bytes[body..]))
}

/// Reads `sizes.len()` float sections from `payload`; `header_len` is only
/// used for byte counts in errors.
pub fn decode_sections(
    payload: &[u8],
    header_len: usize,
    sizes: &[usize],
) -> Result<Vec<Vec<f32>>> {
    let need: usize = sizes.iter().sum::<usize>() * 4;
    if payload.len() < need {
        return Err(Error::Truncated {
            expected: header_len + need,
            actual: header_len + payload.len(),
        });
    }
    if payload.len() > need {
        return Err(Error::DimensionMismatch(format!(
            "metadata implies {} payload bytes but file has {}",
            need,
            payload.len()
        )));
    }
    let mut out = Vec::with_capacity(sizes.len());
    let mut offset = 0;
    for &n in sizes {
        let v = payload[offset..offset + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        offset += 4 * n;
        out.push(v);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct KgeMeta {
    kind: String,
    n_entities: usize,
    n_relations: usize,
    d_s: usize,
    gamma: f32,
    seed: u64,
}

pub fn encode_model(model: &EmbeddingModel) -> Result<Vec<u8>> {
    let meta = KgeMeta {
        kind: model.kind().as_str().to_string(),
        n_entities: model.n_entities(),
        n_relations: model.n_relations(),
        d_s: model.dim(),
        gamma: model.gamma(),
        seed: model.seed(),
    };
    encode(&meta, &[model.entity_matrix(), model.relation_matrix()])
}

pub fn decode_model(bytes: &[u8]) -> Result<EmbeddingModel> {
    let (meta_bytes, payload) = decode_header(bytes)?;
    let meta: KgeMeta =
        serde_json::from_slice(meta_bytes).map_err(|e| Error::Metadata(e.to_string()))?;
    let kind: ModelKind = meta.kind.parse().map_err(|_| {
        Error::Metadata(format!(
            "not an embedding model checkpoint (kind {:?})",
            meta.kind
        ))
    })?;
    if meta.d_s == 0 || (kind.is_complex() && !meta.d_s.is_multiple_of(2)) {
        return Err(Error::DimensionMismatch(format!(
            "d_s = {} is invalid for {kind}",
            meta.d_s
        )));
    }
    let sizes = [
        meta.n_entities * meta.d_s,
        meta.n_relations * kind.relation_width(meta.d_s),
    ];
    let mut sections = decode_sections(payload, 12 + meta_bytes.len(), &sizes)?;
    let relation = sections.pop().unwrap_or_default();
    let entity = sections.pop().unwrap_or_default();
    let model = EmbeddingModel {
        kind,
        n_entities: meta.n_entities,
        n_relations: meta.n_relations,
        dim: meta.d_s,
        gamma: meta.gamma,
        seed: meta.seed,
        entity,
        relation,
    };
    Ok(model)
}

pub fn save_checkpoint(model: &EmbeddingModel, path: &Path) -> Result<()> {
    fs::write(path, encode_model(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<EmbeddingModel> {
    decode_model(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> EmbeddingModel {
        EmbeddingModel::init(ModelKind::RotatE, 7, 3, 6, 6.0, 42).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let bytes = encode_model(&m).unwrap();
        let back = decode_model(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode_model(&back).unwrap(), bytes);
    }

    #[test]
    fn corrupt_magic_is_reported() {
        let mut bytes = encode_model(&model()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            decode_model(&bytes),
            Err(Error::MagicMismatch { .. })
        ));
    }

    #[test]
    fn truncated_matrix_reports_byte_counts() {
        let bytes = encode_model(&model()).unwrap();
        let cut = bytes.len() - 10;
        match decode_model(&bytes[..cut]) {
            Err(Error::Truncated { expected, actual }) => {
                assert_eq!(expected, bytes.len());
                assert_eq!(actual, cut);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_are_a_dimension_mismatch() {
        let mut bytes = encode_model(&model()).unwrap();
        bytes.extend_from_slice(&[0, 0, 0, 0]);
        assert!(matches!(
            decode_model(&bytes),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn header_layout() {
        let bytes = encode_model(&model()).unwrap();
        assert_eq!(&bytes[..8], b"FTGKGE1\n");
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let meta: serde_json::Value = serde_json::from_slice(&bytes[12..12 + len]).unwrap();
        assert_eq!(meta["kind"], "RotatE");
        assert_eq!(meta["d_s"], 6);
        assert_eq!(bytes.len(), 12 + len + 4 * (7 * 6 + 3 * 3));
    }
}

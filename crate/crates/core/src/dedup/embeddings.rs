//! Embedding files written by an external encoder.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! "PMEB" | version u8 = 1 | count u32 | dim u32 |
//! count x ( id_len u16 | id utf-8 bytes | dim x f32 )
//! ```
//!
//! The JSON alternative is an array of `{"id": ..., "values": [...]}`. Values
//! from either form pass through `f32`, so both load to identical vectors.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SemanticEmbedding;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PMEB";
pub const VERSION: u8 = 1;

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    id: String,
    values: Vec<f64>,
}

/// Embeddings keyed by frame id, all of one dimension.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    by_id: BTreeMap<String, SemanticEmbedding>,
}

impl EmbeddingTable {
    pub fn from_embeddings(embeddings: Vec<SemanticEmbedding>) -> Result<Self> {
        let mut table = EmbeddingTable::default();
        let mut first_id: Option<String> = None;
        for emb in embeddings {
            match &first_id {
                None => {
                    table.dim = emb.values.len();
                    first_id = Some(emb.source_id.clone());
                }
                Some(first) if emb.values.len() != table.dim => {
                    return Err(Error::EmbeddingLengthMismatch {
                        first_id: first.clone(),
                        first_len: table.dim,
                        other_id: emb.source_id,
                        other_len: emb.values.len(),
                    })
                }
                _ => {}
            }
            if table.by_id.contains_key(&emb.source_id) {
                return Err(Error::InvalidInput(format!(
                    "duplicate embedding id {}",
                    emb.source_id
                )));
            }
            table.by_id.insert(emb.source_id.clone(), emb);
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&SemanticEmbedding> {
        self.by_id.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &SemanticEmbedding> {
        self.by_id.values()
    }
}

fn through_f32(v: f64) -> f64 {
    v as f32 as f64
}

/// Reads either format, sniffing the magic bytes.
pub fn read_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let embeddings = if bytes.starts_with(MAGIC) {
        decode_binary(&bytes).map_err(|msg| {
            Error::InvalidInput(format!("{}: {msg}", path.display()))
        })?
    } else {
        decode_json(&bytes, &path.display().to_string())?
    };
    EmbeddingTable::from_embeddings(embeddings)
}

pub fn decode_json(bytes: &[u8], context: &str) -> Result<Vec<SemanticEmbedding>> {
    let records: Vec<JsonRecord> =
        serde_json::from_slice(bytes).map_err(|e| Error::json(context, e))?;
    records
        .into_iter()
        .map(|r| SemanticEmbedding::new(r.id, r.values.into_iter().map(through_f32).collect()))
        .collect()
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(format!("truncated at byte {}", self.pos)),
        }
    }

    fn u16(&mut self) -> Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_binary(bytes: &[u8]) -> Result<Vec<SemanticEmbedding>, String> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err("bad magic".into());
    }
    let version = cur.take(1)?[0];
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let count = cur.u32()? as usize;
    let dim = cur.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    let mut seen = HashSet::new();
    for _ in 0..count {
        let id_len = cur.u16()? as usize;
        let id = std::str::from_utf8(cur.take(id_len)?)
            .map_err(|e| format!("id is not utf-8: {e}"))?
            .to_owned();
        if !seen.insert(id.clone()) {
            return Err(format!("duplicate id {id}"));
        }
        let raw = cur.take(dim * 4)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        out.push(SemanticEmbedding::new(id, values).map_err(|e| e.to_string())?);
    }
    if cur.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - cur.pos));
    }
    Ok(out)
}

pub fn encode_binary(embeddings: &[SemanticEmbedding]) -> Result<Vec<u8>> {
    let dim = embeddings.first().map_or(0, |e| e.values.len());
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(embeddings.len() as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for e in embeddings {
        if e.values.len() != dim {
            return Err(Error::EmbeddingLengthMismatch {
                first_id: embeddings[0].source_id.clone(),
                first_len: dim,
                other_id: e.source_id.clone(),
                other_len: e.values.len(),
            });
        }
        let id = e.source_id.as_bytes();
        let id_len = u16::try_from(id.len())
            .map_err(|_| Error::InvalidInput(format!("id too long: {}", e.source_id)))?;
        out.extend_from_slice(&id_len.to_le_bytes());
        out.extend_from_slice(id);
        for &v in &e.values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn encode_json(embeddings: &[SemanticEmbedding]) -> Result<Vec<u8>> {
    let records: Vec<JsonRecord> = embeddings
        .iter()
        .map(|e| JsonRecord {
            id: e.source_id.clone(),
            values: e.values.iter().map(|&v| through_f32(v)).collect(),
        })
        .collect();
    serde_json::to_vec(&records).map_err(|e| Error::json("embeddings", e))
}

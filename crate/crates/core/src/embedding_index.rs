//! Exact cosine top-k search over unit-normalized shot embeddings, plus the
//! `GAREMB1` binary store format and the plain-text ingest format.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! magic      8 bytes   "GAREMB1\n"
//! count      u32
//! dim        u32
//! ids        count × (u16 byte length, UTF-8 bytes)
//! vectors    count × dim × f32, entry order
//! checksum   u64 FNV-1a over every byte between the magic and the checksum
//! ```

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::Fnv1a64;

pub const STORE_MAGIC: &[u8; 8] = b"GAREMB1\n";

const MIN_NORM: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("zero vector{}", .0.as_deref().map(|id| format!(" for shot {id}")).unwrap_or_default())]
    ZeroVector(Option<String>),
    #[error("non-finite vector entry{}", .0.as_deref().map(|id| format!(" for shot {id}")).unwrap_or_default())]
    NonFinite(Option<String>),
    #[error("duplicate shot id {0}")]
    DuplicateId(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid shot id {0:?}")]
    InvalidId(String),
    #[error("dimension must be positive")]
    ZeroDim,
    #[error("bad magic bytes")]
    BadMagic,
    #[error("truncated store: {0}")]
    Truncated(&'static str),
    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("{0} trailing bytes after checksum")]
    TrailingBytes(usize),
    #[error("malformed vector line {0}")]
    MalformedLine(usize),
}

/// A finite embedding vector. Values produced by [`normalize`] have unit L2 norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self, IndexError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(IndexError::NonFinite(None));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.0)
    }
}

fn l2_norm(values: &[f32]) -> f64 {
    values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
}

/// Scales `values` to unit L2 norm.
pub fn normalize(values: &[f32]) -> Result<EmbeddingVector, IndexError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(IndexError::NonFinite(None));
    }
    let norm = l2_norm(values);
    if norm < MIN_NORM {
        return Err(IndexError::ZeroVector(None));
    }
    Ok(EmbeddingVector(
        values.iter().map(|&v| (f64::from(v) / norm) as f32).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub shot_id: String,
    pub score: f32,
}

/// Descending score, then ascending id. Scores are finite so `partial_cmp`
/// never fails, and `0.0 == -0.0` counts as a tie.
pub(crate) fn hit_order(a_score: f32, a_id: &str, b_score: f32, b_id: &str) -> Ordering {
    b_score
        .partial_cmp(&a_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a_id.as_bytes().cmp(b_id.as_bytes()))
}

fn validate_id(id: &str) -> Result<(), IndexError> {
    if id.is_empty() || id.chars().any(char::is_whitespace) || id.len() > usize::from(u16::MAX) {
        return Err(IndexError::InvalidId(id.to_string()));
    }
    Ok(())
}

/// Immutable, id-addressed matrix of unit-norm shot vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    lookup: HashMap<String, usize>,
    checksum: u64,
}

impl EmbeddingStore {
    /// Normalizes every record and rejects duplicates, bad ids and wrong lengths.
    pub fn build<I, S>(records: I, dim: usize) -> Result<Self, IndexError>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        if dim == 0 {
            return Err(IndexError::ZeroDim);
        }
        let mut ids = Vec::new();
        let mut data = Vec::new();
        let mut lookup = HashMap::new();
        for (id, raw) in records {
            let id = id.into();
            validate_id(&id)?;
            if raw.len() != dim {
                return Err(IndexError::DimMismatch {
                    expected: dim,
                    got: raw.len(),
                });
            }
            if lookup.contains_key(&id) {
                return Err(IndexError::DuplicateId(id));
            }
            let unit = normalize(&raw).map_err(|e| match e {
                IndexError::ZeroVector(_) => IndexError::ZeroVector(Some(id.clone())),
                IndexError::NonFinite(_) => IndexError::NonFinite(Some(id.clone())),
                other => other,
            })?;
            lookup.insert(id.clone(), ids.len());
            ids.push(id);
            data.extend_from_slice(unit.as_slice());
        }
        let checksum = payload_checksum(dim, &ids, &data);
        Ok(Self {
            dim,
            ids,
            data,
            lookup,
            checksum,
        })
    }

    /// Builds from the text ingest format: `shot_id v1 v2 ...` per line.
    /// The dimension is taken from the first record.
    pub fn from_text(text: &str) -> Result<Self, IndexError> {
        let records = parse_vector_lines(text)?;
        let dim = records.first().map(|(_, v)| v.len()).unwrap_or(1);
        Self::build(records, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn checksum(&self) -> u64 {
        self.checksum
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, index: usize) -> &[f32] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn get(&self, shot_id: &str) -> Option<&[f32]> {
        self.lookup.get(shot_id).map(|&i| self.vector(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .zip(self.data.chunks_exact(self.dim))
            .map(|(id, v)| (id.as_str(), v))
    }

    /// Exact top-k by dot product against the normalized query.
    pub fn knn_search(&self, query: &[f32], k: usize) -> Result<Vec<SearchHit>, IndexError> {
        if query.len() != self.dim {
            return Err(IndexError::DimMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        if self.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        let query = normalize(query)?;
        let q = query.as_slice();
        let mut scored: Vec<(f32, usize)> = self
            .data
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, v)| (dot(q, v), i))
            .collect();
        let cmp = |a: &(f32, usize), b: &(f32, usize)| hit_order(a.0, &self.ids[a.1], b.0, &self.ids[b.1]);
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_unstable_by(cmp);
        Ok(scored
            .into_iter()
            .map(|(score, i)| SearchHit {
                shot_id: self.ids[i].clone(),
                score,
            })
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 + self.data.len() * 4 + self.ids.len() * 16 + 8);
        out.extend_from_slice(STORE_MAGIC);
        write_payload(&mut out, self.dim, &self.ids, &self.data);
        out.extend_from_slice(&self.checksum.to_le_bytes());
        out
    }

    /// Parses and verifies a binary store. Vectors are trusted as written
    /// (they were normalized before serialization).
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        if bytes.len() < STORE_MAGIC.len() || &bytes[..8] != STORE_MAGIC {
            return Err(IndexError::BadMagic);
        }
        let mut r = Reader {
            buf: &bytes[8..],
            pos: 0,
        };
        let count = r.u32("entry count")? as usize;
        let dim = r.u32("dimension")? as usize;
        if dim == 0 {
            return Err(IndexError::ZeroDim);
        }
        let mut ids = Vec::with_capacity(count.min(1 << 20));
        let mut lookup = HashMap::new();
        for _ in 0..count {
            let len = r.u16("id length")? as usize;
            let raw = r.take(len, "id bytes")?;
            let id = std::str::from_utf8(raw)
                .map_err(|_| IndexError::InvalidId(String::from_utf8_lossy(raw).into_owned()))?
                .to_string();
            validate_id(&id)?;
            if lookup.insert(id.clone(), ids.len()).is_some() {
                return Err(IndexError::DuplicateId(id));
            }
            ids.push(id);
        }
        let n_values = count.checked_mul(dim).ok_or(IndexError::Truncated("vector block"))?;
        let raw = r.take(
            n_values.checked_mul(4).ok_or(IndexError::Truncated("vector block"))?,
            "vector block",
        )?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(IndexError::NonFinite(None));
        }
        let payload_end = r.pos;
        let stored = r.u64("checksum")?;
        if r.pos != r.buf.len() {
            return Err(IndexError::TrailingBytes(r.buf.len() - r.pos));
        }
        let mut h = Fnv1a64::new();
        h.update(&r.buf[..payload_end]);
        let computed = h.finish();
        if computed != stored {
            return Err(IndexError::ChecksumMismatch { stored, computed });
        }
        Ok(Self {
            dim,
            ids,
            data,
            lookup,
            checksum: stored,
        })
    }
}

/// Sequential f32 accumulation in index order.
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

fn write_payload(out: &mut Vec<u8>, dim: usize, ids: &[String], data: &[f32]) {
    out.extend_from_slice(&(ids.len() as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for id in ids {
        out.extend_from_slice(&(id.len() as u16).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn payload_checksum(dim: usize, ids: &[String], data: &[f32]) -> u64 {
    let mut buf = Vec::new();
    write_payload(&mut buf, dim, ids, data);
    crate::hash::fnv1a64(&buf)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], IndexError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(IndexError::Truncated(what))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, IndexError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, IndexError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, IndexError> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }
}

/// Parses `shot_id v1 v2 ...` lines. Blank lines and `#` comments are skipped.
pub fn parse_vector_lines(text: &str) -> Result<Vec<(String, Vec<f32>)>, IndexError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let id = fields.next().ok_or(IndexError::MalformedLine(i + 1))?;
        let values = fields
            .map(|f| f.parse::<f32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| IndexError::MalformedLine(i + 1))?;
        if values.is_empty() {
            return Err(IndexError::MalformedLine(i + 1));
        }
        out.push((id.to_string(), values));
    }
    Ok(out)
}

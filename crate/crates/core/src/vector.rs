//! Exact top-k cosine retrieval over precomputed clip embeddings, the
//! on-disk embedding formats, and the feature-hashing text embedder used to
//! simulate a joint text/video space.
//!
//! Binary layout (little-endian): `"AVEM"`, version `u32 = 1`, dim `u32`,
//! count `u64`, then per record `id_len u16`, UTF-8 id bytes, `dim` x `f32`.
//! The JSON Lines debug form has one `{"clip_id": .., "vector": [..]}` per
//! line and holds the same `f32` values.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::text::analyze;

pub const MAGIC: &[u8; 4] = b"AVEM";
pub const FORMAT_VERSION: u32 = 1;
/// Stored vectors must be unit length to within this before normalization.
pub const LOAD_NORM_TOLERANCE: f64 = 1e-3;
pub const MIN_HASH_DIM: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum VectorError {
    #[error("not an embedding file (bad magic)")]
    BadMagic,
    #[error("unsupported embedding file version {0}")]
    BadVersion(u32),
    #[error("dimension must be positive")]
    ZeroDim,
    #[error("clip {clip_id}: expected {expected} values, got {got}")]
    DimMismatch {
        clip_id: String,
        expected: usize,
        got: usize,
    },
    #[error("duplicate clip_id {0}")]
    DuplicateId(String),
    #[error("clip {0}: zero vector cannot be normalized")]
    ZeroVector(String),
    #[error("clip {clip_id}: norm {norm} is not within {LOAD_NORM_TOLERANCE} of 1")]
    NotUnit { clip_id: String, norm: f64 },
    #[error("clip {0}: non-finite value")]
    NonFinite(String),
    #[error("clip id longer than {} bytes", u16::MAX)]
    IdTooLong,
    #[error("truncated or malformed embedding file: {0}")]
    Malformed(String),
    #[error("hash embedding needs dim >= {MIN_HASH_DIM}, got {0}")]
    DimTooSmall(usize),
    #[error("text has no tokens to embed")]
    EmptyText,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> VectorError + '_ {
    move |source| VectorError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub clip_id: String,
    pub score: f64,
    pub rank: usize,
}

/// Unit vectors keyed by clip id. Keeps the `f32` values exactly as read or
/// given, and an `f64` normalized copy that scoring uses.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    ids: Vec<String>,
    positions: HashMap<String, usize>,
    raw: Vec<f32>,
    unit: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn empty(dim: usize) -> Result<Self, VectorError> {
        if dim == 0 {
            return Err(VectorError::ZeroDim);
        }
        Ok(Self {
            dim,
            ids: Vec::new(),
            positions: HashMap::new(),
            raw: Vec::new(),
            unit: Vec::new(),
        })
    }

    /// Builds a matrix from computed vectors of any non-zero length; each is
    /// rounded to `f32` and normalized.
    pub fn from_vectors<S: Into<String>>(
        dim: usize,
        entries: impl IntoIterator<Item = (S, Vec<f64>)>,
    ) -> Result<Self, VectorError> {
        let mut m = Self::empty(dim)?;
        for (id, v) in entries {
            let raw: Vec<f32> = v.iter().map(|&x| x as f32).collect();
            m.push(id.into(), raw, None)?;
        }
        Ok(m)
    }

    /// Adds one record. With `tolerance`, the vector must already be unit
    /// length within it.
    fn push(&mut self, id: String, raw: Vec<f32>, tolerance: Option<f64>) -> Result<(), VectorError> {
        if raw.len() != self.dim {
            return Err(VectorError::DimMismatch {
                clip_id: id,
                expected: self.dim,
                got: raw.len(),
            });
        }
        if raw.iter().any(|x| !x.is_finite()) {
            return Err(VectorError::NonFinite(id));
        }
        if self.positions.contains_key(&id) {
            return Err(VectorError::DuplicateId(id));
        }
        let norm = raw.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(VectorError::ZeroVector(id));
        }
        if let Some(tol) = tolerance {
            if (norm - 1.0).abs() > tol {
                return Err(VectorError::NotUnit { clip_id: id, norm });
            }
        }
        self.unit.extend(raw.iter().map(|&x| x as f64 / norm));
        self.raw.extend_from_slice(&raw);
        self.positions.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        Ok(())
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

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn position(&self, clip_id: &str) -> Option<usize> {
        self.positions.get(clip_id).copied()
    }

    /// Normalized vector of entry `i`.
    pub fn vector(&self, i: usize) -> &[f64] {
        &self.unit[i * self.dim..(i + 1) * self.dim]
    }

    pub fn raw_vector(&self, i: usize) -> &[f32] {
        &self.raw[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, clip_id: &str) -> Option<&[f64]> {
        self.position(clip_id).map(|i| self.vector(i))
    }

    /// Keeps only entries whose id passes `keep`, in their current order.
    pub fn filtered(&self, mut keep: impl FnMut(&str) -> bool) -> Self {
        let mut out = Self::empty(self.dim).expect("dim already validated");
        for i in 0..self.len() {
            if keep(&self.ids[i]) {
                out.positions.insert(self.ids[i].clone(), out.ids.len());
                out.ids.push(self.ids[i].clone());
                out.raw.extend_from_slice(self.raw_vector(i));
                out.unit.extend_from_slice(self.vector(i));
            }
        }
        out
    }

    /// Exact top-k by dot product against every stored vector. Ties break
    /// by ascending clip id; returns `min(k, len)` hits.
    pub fn search(&self, query: &[f64], k: usize) -> Result<Vec<ScoredHit>, VectorError> {
        if query.len() != self.dim {
            return Err(VectorError::DimMismatch {
                clip_id: "<query>".into(),
                expected: self.dim,
                got: query.len(),
            });
        }
        let scores: Vec<f64> = (0..self.len()).map(|i| dot(self.vector(i), query)).collect();
        let order = |&a: &usize, &b: &usize| {
            // scores are finite; partial_cmp also equates 0.0 and -0.0
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap_or(Ordering::Equal)
                .then_with(|| self.ids[a].cmp(&self.ids[b]))
        };
        let mut idx: Vec<usize> = (0..self.len()).collect();
        let k = k.min(idx.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        if k < idx.len() {
            idx.select_nth_unstable_by(k - 1, order);
            idx.truncate(k);
        }
        idx.sort_unstable_by(order);
        Ok(idx
            .into_iter()
            .enumerate()
            .map(|(r, i)| ScoredHit {
                clip_id: self.ids[i].clone(),
                score: scores[i],
                rank: r + 1,
            })
            .collect())
    }

    pub fn write_binary(&self, out: &mut impl Write) -> Result<(), VectorError> {
        let io = io_at(Path::new(""));
        out.write_all(MAGIC).map_err(&io)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(&io)?;
        out.write_all(&(self.dim as u32).to_le_bytes()).map_err(&io)?;
        out.write_all(&(self.len() as u64).to_le_bytes()).map_err(&io)?;
        for i in 0..self.len() {
            let id = self.ids[i].as_bytes();
            let len = u16::try_from(id.len()).map_err(|_| VectorError::IdTooLong)?;
            out.write_all(&len.to_le_bytes()).map_err(&io)?;
            out.write_all(id).map_err(&io)?;
            for x in self.raw_vector(i) {
                out.write_all(&x.to_le_bytes()).map_err(&io)?;
            }
        }
        Ok(())
    }

    pub fn read_binary(input: &mut impl Read) -> Result<Self, VectorError> {
        let mut magic = [0u8; 4];
        input
            .read_exact(&mut magic)
            .map_err(|_| VectorError::BadMagic)?;
        if &magic != MAGIC {
            return Err(VectorError::BadMagic);
        }
        let version = read_u32(input)?;
        if version != FORMAT_VERSION {
            return Err(VectorError::BadVersion(version));
        }
        let dim = read_u32(input)? as usize;
        let count = read_u64(input)?;
        let mut m = Self::empty(dim)?;
        let mut buf = vec![0u8; dim * 4];
        for _ in 0..count {
            let mut len = [0u8; 2];
            read_exact(input, &mut len)?;
            let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
            read_exact(input, &mut id)?;
            let id = String::from_utf8(id).map_err(|e| VectorError::Malformed(e.to_string()))?;
            read_exact(input, &mut buf)?;
            let raw = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            m.push(id, raw, Some(LOAD_NORM_TOLERANCE))?;
        }
        let mut rest = [0u8; 1];
        if input.read(&mut rest).map_err(io_at(Path::new("")))? != 0 {
            return Err(VectorError::Malformed("trailing bytes after last record".into()));
        }
        Ok(m)
    }

    pub fn write_jsonl(&self, out: &mut impl Write) -> Result<(), VectorError> {
        let io = io_at(Path::new(""));
        for i in 0..self.len() {
            let line = JsonRecord {
                clip_id: self.ids[i].clone(),
                vector: self.raw_vector(i).to_vec(),
            };
            serde_json::to_writer(&mut *out, &line).map_err(|e| io(e.into()))?;
            out.write_all(b"\n").map_err(&io)?;
        }
        Ok(())
    }

    /// Reads the JSON Lines form. Without `dim`, the first record sets it.
    pub fn read_jsonl(input: impl BufRead, dim: Option<usize>) -> Result<Self, VectorError> {
        let mut m: Option<Self> = dim.map(Self::empty).transpose()?;
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(io_at(Path::new("")))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: JsonRecord = serde_json::from_str(&line)
                .map_err(|e| VectorError::Malformed(format!("line {}: {e}", n + 1)))?;
            let m = match m.as_mut() {
                Some(m) => m,
                None => m.insert(Self::empty(rec.vector.len())?),
            };
            m.push(rec.clip_id, rec.vector, Some(LOAD_NORM_TOLERANCE))?;
        }
        m.ok_or_else(|| VectorError::Malformed("no records and no dimension".into()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), VectorError> {
        let path = path.as_ref();
        let mut out = BufWriter::new(File::create(path).map_err(io_at(path))?);
        if is_jsonl(path) {
            self.write_jsonl(&mut out)?;
        } else {
            self.write_binary(&mut out)?;
        }
        out.flush().map_err(io_at(path))
    }
}

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    clip_id: String,
    vector: Vec<f32>,
}

fn is_jsonl(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl") | Some("json")
    )
}

/// Loads an embedding file; `.jsonl` paths use the debug form.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix, VectorError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_at(path))?;
    let mut reader = BufReader::new(file);
    if is_jsonl(path) {
        EmbeddingMatrix::read_jsonl(reader, None)
    } else {
        EmbeddingMatrix::read_binary(&mut reader)
    }
}

fn read_exact(input: &mut impl Read, buf: &mut [u8]) -> Result<(), VectorError> {
    input
        .read_exact(buf)
        .map_err(|e| VectorError::Malformed(e.to_string()))
}

fn read_u32(input: &mut impl Read) -> Result<u32, VectorError> {
    let mut b = [0u8; 4];
    read_exact(input, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(input: &mut impl Read) -> Result<u64, VectorError> {
    let mut b = [0u8; 8];
    read_exact(input, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact top-k search; see [`EmbeddingMatrix::search`].
pub fn vector_search(
    matrix: &EmbeddingMatrix,
    query: &[f64],
    k: usize,
) -> Result<Vec<ScoredHit>, VectorError> {
    matrix.search(query, k)
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over the UTF-8 bytes of `token`.
pub fn token_hash(token: &str) -> u64 {
    token.bytes().fold(FNV_OFFSET, |h, b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Bucket and sign a token contributes to in a `dim`-wide hashed vector:
/// bucket = hash mod dim, sign negative when the top hash bit is set.
pub fn hash_slot(token: &str, dim: usize) -> (usize, f64) {
    let h = token_hash(token);
    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
    ((h % dim as u64) as usize, sign)
}

/// Signed bag-of-tokens feature hashing, L2-normalized. Tokens come from the
/// same analyzer as the full-text index.
pub fn hash_embed(text: &str, dim: usize) -> Result<Vec<f64>, VectorError> {
    if dim < MIN_HASH_DIM {
        return Err(VectorError::DimTooSmall(dim));
    }
    let tokens = analyze(text);
    if tokens.is_empty() {
        return Err(VectorError::EmptyText);
    }
    let mut v = vec![0.0; dim];
    for token in &tokens {
        let (bucket, sign) = hash_slot(token, dim);
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        // every token cancelled against a colliding token of opposite sign
        return Err(VectorError::EmptyText);
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

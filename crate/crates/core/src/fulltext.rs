//! Inverted index over clip transcripts with Okapi BM25 ranking.
//!
//! `idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))`, which is never negative.
//! Query tokens are a multiset: a repeated token contributes once per
//! occurrence. No stemming and no stop words.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::text::analyze;
use crate::vector::ScoredHit;

pub const SNAPSHOT_MAGIC: &[u8; 5] = b"AVFT1";

#[derive(Debug, thiserror::Error)]
pub enum FulltextError {
    #[error("duplicate clip_id {0}")]
    DuplicateId(String),
    #[error("invalid BM25 parameters k1={k1} b={b}")]
    BadParams { k1: f64, b: f64 },
    #[error("not a full-text snapshot (bad magic)")]
    BadMagic,
    #[error("snapshot decode: {0}")]
    Decode(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    fn check(self) -> Result<Self, FulltextError> {
        if self.k1 > 0.0 && self.k1.is_finite() && (0.0..=1.0).contains(&self.b) {
            Ok(self)
        } else {
            Err(FulltextError::BadParams {
                k1: self.k1,
                b: self.b,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FulltextIndex {
    postings: HashMap<String, Vec<Posting>>,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avgdl: f64,
    params: Bm25Params,
}

impl FulltextIndex {
    pub fn build<I, S, T>(docs: I, params: Bm25Params) -> Result<Self, FulltextError>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        let params = params.check()?;
        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut doc_ids = Vec::new();
        let mut doc_lengths = Vec::new();
        let mut seen = HashSet::new();
        for (ordinal, (id, text)) in docs.into_iter().enumerate() {
            let id = id.into();
            if !seen.insert(id.clone()) {
                return Err(FulltextError::DuplicateId(id));
            }
            let tokens = analyze(text.as_ref());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for token in &tokens {
                *tf.entry(token.clone()).or_default() += 1;
            }
            for (token, count) in tf {
                // ordinals are visited in increasing order, so lists stay sorted
                postings.entry(token).or_default().push(Posting {
                    doc: ordinal as u32,
                    tf: count,
                });
            }
            doc_ids.push(id);
            doc_lengths.push(tokens.len() as u32);
        }
        let avgdl = if doc_lengths.is_empty() {
            0.0
        } else {
            doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / doc_lengths.len() as f64
        };
        Ok(Self {
            postings,
            doc_ids,
            doc_lengths,
            avgdl,
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn postings(&self, token: &str) -> &[Posting] {
        self.postings.get(token).map_or(&[], Vec::as_slice)
    }

    pub fn idf(&self, token: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.postings(token).len() as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Top `k` documents by BM25, score descending then clip id ascending.
    /// Documents with no matching token are not returned.
    pub fn search(&self, query: &str, k: usize) -> Vec<ScoredHit> {
        if k == 0 || self.is_empty() {
            return Vec::new();
        }
        let Bm25Params { k1, b } = self.params;
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for token in analyze(query) {
            let postings = self.postings(&token);
            if postings.is_empty() {
                continue;
            }
            let idf = self.idf(&token);
            for p in postings {
                let tf = p.tf as f64;
                let dl = self.doc_lengths[p.doc as usize] as f64;
                let norm = k1 * (1.0 - b + b * dl / self.avgdl);
                *scores.entry(p.doc).or_default() += idf * tf * (k1 + 1.0) / (tf + norm);
            }
        }
        let mut ranked: Vec<(&str, f64)> = scores
            .into_iter()
            .filter(|&(_, s)| s > 0.0)
            .map(|(doc, s)| (self.doc_ids[doc as usize].as_str(), s))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(k);
        ranked
            .into_iter()
            .enumerate()
            .map(|(i, (id, score))| ScoredHit {
                clip_id: id.to_owned(),
                score,
                rank: i + 1,
            })
            .collect()
    }

    pub fn write_snapshot(&self, out: &mut impl Write) -> Result<(), FulltextError> {
        let io = |source| FulltextError::Io {
            path: PathBuf::new(),
            source,
        };
        out.write_all(SNAPSHOT_MAGIC).map_err(io)?;
        serde_json::to_writer(&mut *out, &SnapshotBody::from(self))?;
        Ok(())
    }

    pub fn read_snapshot(input: &mut impl Read) -> Result<Self, FulltextError> {
        let mut magic = [0u8; 5];
        input.read_exact(&mut magic).map_err(|_| FulltextError::BadMagic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(FulltextError::BadMagic);
        }
        let body: SnapshotBody = serde_json::from_reader(input)?;
        body.into_index()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FulltextError> {
        let path = path.as_ref();
        let io = |source| FulltextError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        self.write_snapshot(&mut out)?;
        out.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FulltextError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| FulltextError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_snapshot(&mut BufReader::new(file))
    }
}

/// Snapshot payload. Postings are written in token order so the file is
/// stable for a given index.
#[derive(Serialize, Deserialize)]
struct SnapshotBody {
    version: u32,
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    postings: Vec<(String, Vec<(u32, u32)>)>,
}

impl From<&FulltextIndex> for SnapshotBody {
    fn from(idx: &FulltextIndex) -> Self {
        let mut postings: Vec<_> = idx
            .postings
            .iter()
            .map(|(t, ps)| (t.clone(), ps.iter().map(|p| (p.doc, p.tf)).collect()))
            .collect();
        postings.sort_by(|a: &(String, Vec<(u32, u32)>), b| a.0.cmp(&b.0));
        Self {
            version: 1,
            params: idx.params,
            doc_ids: idx.doc_ids.clone(),
            doc_lengths: idx.doc_lengths.clone(),
            postings,
        }
    }
}

impl SnapshotBody {
    fn into_index(self) -> Result<FulltextIndex, FulltextError> {
        let params = self.params.check()?;
        let avgdl = if self.doc_lengths.is_empty() {
            0.0
        } else {
            self.doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / self.doc_lengths.len() as f64
        };
        Ok(FulltextIndex {
            postings: self
                .postings
                .into_iter()
                .map(|(t, ps)| (t, ps.into_iter().map(|(doc, tf)| Posting { doc, tf }).collect()))
                .collect(),
            doc_ids: self.doc_ids,
            doc_lengths: self.doc_lengths,
            avgdl,
            params,
        })
    }
}

//! Dense retrieval: embedding providers and exact inner-product search.

use std::fs::File;
use std::hash::Hasher;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use fnv::FnvHasher;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::Analyzer;
use crate::binio::ByteReader;
use crate::corpus::Passage;
use crate::error::{Error, Result};
use crate::fusion::{top_k, Ranking};

/// Key for the FNV-1a hasher behind [`hash_embed`]. Part of the index fingerprint.
pub const HASH_SEED: u64 = 0x5eed_0f0a_2021;

pub const MAGIC: &[u8; 4] = b"DNIX";
pub const FORMAT_VERSION: u32 = 1;

/// Question and passage encoders of a dual-encoder retriever.
///
/// Implementations must be deterministic, always return `dim()` finite
/// values, and report a fingerprint that changes whenever their vectors do.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn fingerprint(&self) -> String;
    fn embed_query(&self, text: &str) -> Result<Vec<f32>>;
    fn embed_passage(&self, title: &str, text: &str) -> Result<Vec<f32>>;
}

/// Signed feature hashing of analyzed tokens, L2-normalized.
///
/// Text with no tokens maps to the zero vector.
pub fn hash_embed(text: &str, dim: usize) -> Vec<f32> {
    hash_embed_with(&Analyzer::default(), text, dim)
}

fn hash_embed_with(analyzer: &Analyzer, text: &str, dim: usize) -> Vec<f32> {
    assert!(dim >= 1, "embedding dimension must be at least 1");
    let mut acc = vec![0f64; dim];
    analyzer.for_each_token(text, |t| {
        let mut h = FnvHasher::with_key(HASH_SEED);
        h.write(t.as_bytes());
        let h = h.finish();
        let bucket = (h % dim as u64) as usize;
        acc[bucket] += if h >> 63 == 1 { -1.0 } else { 1.0 };
    });
    let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; dim];
    }
    acc.into_iter().map(|x| (x / norm) as f32).collect()
}

/// The built-in test-double encoder: [`hash_embed`] for both towers.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    analyzer: Analyzer,
    include_title: bool,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "embedding dimension must be at least 1");
        Self {
            dim,
            analyzer: Analyzer::default(),
            include_title: false,
        }
    }

    /// Prepend the passage title to the passage text before hashing.
    pub fn with_title(mut self, include_title: bool) -> Self {
        self.include_title = include_title;
        self
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        format!(
            "hash-embed/v1/dim={}/seed={:#x}/title={}",
            self.dim, HASH_SEED, self.include_title
        )
    }

    fn embed_query(&self, text: &str) -> Result<Vec<f32>> {
        Ok(hash_embed_with(&self.analyzer, text, self.dim))
    }

    fn embed_passage(&self, title: &str, text: &str) -> Result<Vec<f32>> {
        if self.include_title && !title.is_empty() {
            Ok(hash_embed_with(
                &self.analyzer,
                &format!("{title} {text}"),
                self.dim,
            ))
        } else {
            Ok(hash_embed_with(&self.analyzer, text, self.dim))
        }
    }
}

const PROBES: &[(&str, &str)] = &[
    ("", "What are the most common symptoms?"),
    ("Title", "Fever, fatigue and dry cough were reported."),
];

/// Reject providers whose outputs differ between identical calls, have the
/// wrong length or contain non-finite values.
pub fn check_provider(provider: &dyn EmbeddingProvider) -> Result<()> {
    for (title, text) in PROBES {
        let q1 = provider.embed_query(text)?;
        let q2 = provider.embed_query(text)?;
        let p1 = provider.embed_passage(title, text)?;
        let p2 = provider.embed_passage(title, text)?;
        for v in [&q1, &p1] {
            validate_vector("<probe>", v, provider.dim())?;
        }
        if q1 != q2 || p1 != p2 {
            return Err(Error::Provider(format!(
                "provider {} is not deterministic",
                provider.fingerprint()
            )));
        }
    }
    Ok(())
}

pub fn validate_vector(id: &str, v: &[f32], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(Error::DimensionMismatch {
            id: id.to_owned(),
            expected: dim,
            actual: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Provider(format!("non-finite embedding for {id:?}")));
    }
    Ok(())
}

/// Inner product with a fixed accumulation order.
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [0f32; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..8 {
            lanes[i] += x[i] * y[i];
        }
    }
    let mut tail = 0f32;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5]))
        + ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]))
        + tail
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    dim: usize,
    /// Row-major, `passage_ids.len() * dim`.
    matrix: Vec<f32>,
    passage_ids: Vec<String>,
    fingerprint: String,
}

impl DenseIndex {
    /// Embed every passage with `provider`; row `i` belongs to `passages[i]`.
    pub fn build(passages: &[Passage], provider: &dyn EmbeddingProvider) -> Result<Self> {
        if passages.is_empty() {
            return Err(Error::invalid(
                "cannot build a dense index over zero passages",
            ));
        }
        check_provider(provider)?;
        let dim = provider.dim();
        let rows: Vec<Vec<f32>> = passages
            .par_iter()
            .map(|p| {
                let v = provider
                    .embed_passage(&p.title, &p.text)
                    .map_err(|e| Error::Provider(format!("passage {:?}: {e}", p.id)))?;
                validate_vector(&p.id, &v, dim)?;
                Ok(v)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            dim,
            matrix: rows.concat(),
            passage_ids: passages.iter().map(|p| p.id.clone()).collect(),
            fingerprint: provider.fingerprint(),
        })
    }

    /// Assemble an index from precomputed vectors, in `passages` order.
    pub fn from_vectors(passages: &[Passage], vectors: &VectorsFile) -> Result<Self> {
        if passages.is_empty() {
            return Err(Error::invalid(
                "cannot build a dense index over zero passages",
            ));
        }
        let dim = vectors.header.dim;
        let by_id: std::collections::HashMap<&str, &[f32]> = vectors
            .records
            .iter()
            .map(|r| (r.id.as_str(), r.vector.as_slice()))
            .collect();
        let mut matrix = Vec::with_capacity(passages.len() * dim);
        for p in passages {
            let v = by_id
                .get(p.id.as_str())
                .ok_or_else(|| Error::Provider(format!("no vector for passage {:?}", p.id)))?;
            validate_vector(&p.id, v, dim)?;
            matrix.extend_from_slice(v);
        }
        Ok(Self {
            dim,
            matrix,
            passage_ids: passages.iter().map(|p| p.id.clone()).collect(),
            fingerprint: vectors.header.fingerprint.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.passage_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passage_ids.is_empty()
    }

    pub fn passage_ids(&self) -> &[String] {
        &self.passage_ids
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn row(&self, ordinal: usize) -> &[f32] {
        &self.matrix[ordinal * self.dim..(ordinal + 1) * self.dim]
    }

    /// Embed a query, checking the provider matches the one used at build time.
    pub fn embed_query(&self, provider: &dyn EmbeddingProvider, query: &str) -> Result<Vec<f32>> {
        let fp = provider.fingerprint();
        if fp != self.fingerprint {
            return Err(Error::FingerprintMismatch {
                index: self.fingerprint.clone(),
                provider: fp,
            });
        }
        let v = provider.embed_query(query)?;
        validate_vector("<query>", &v, self.dim)?;
        Ok(v)
    }

    pub fn score_vector(&self, query: &[f32], ordinal: usize) -> f64 {
        f64::from(dot(query, self.row(ordinal)))
    }

    /// Exact top-k by inner product, ties by ordinal.
    pub fn search_vector(&self, query: &[f32], k: usize) -> Vec<(u32, f64)> {
        let scores = self
            .matrix
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, row)| (i as u32, f64::from(dot(query, row))));
        top_k(scores, k)
    }

    pub fn search(
        &self,
        provider: &dyn EmbeddingProvider,
        query: &str,
        k: usize,
    ) -> Result<Ranking> {
        let qv = self.embed_query(provider, query)?;
        Ok(Ranking::from_sorted_unchecked(
            self.search_vector(&qv, k)
                .into_iter()
                .map(|(o, s)| (self.passage_ids[o as usize].clone(), s))
                .collect(),
        ))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        let put_str = |w: &mut dyn Write, s: &str| -> std::io::Result<()> {
            w.write_all(&(s.len() as u32).to_le_bytes())?;
            w.write_all(s.as_bytes())
        };
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.passage_ids.len() as u64).to_le_bytes())?;
        put_str(w, &self.fingerprint)?;
        for id in &self.passage_ids {
            put_str(w, id)?;
        }
        for x in &self.matrix {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut buf = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut buf)
            .map_err(|e| Error::io(path, e))?;
        Self::decode(&buf)
    }

    fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf);
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, not a dense index".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported dense index version {version}"
            )));
        }
        let dim = r.u32()? as usize;
        let n = r.u64()? as usize;
        if dim == 0 {
            return Err(Error::Format("dense index has dimension 0".into()));
        }
        let len = r.u32()? as usize;
        let fingerprint = r.str_bytes(len)?;
        let mut passage_ids = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            let len = r.u32()? as usize;
            passage_ids.push(r.str_bytes(len)?);
        }
        let body_len = n
            .checked_mul(dim)
            .and_then(|x| x.checked_mul(4))
            .ok_or_else(|| Error::Format("dense index size overflow".into()))?;
        let matrix: Vec<f32> = r
            .take(body_len)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if !r.is_exhausted() {
            return Err(Error::Format("trailing bytes after dense matrix".into()));
        }
        Ok(Self {
            dim,
            matrix,
            passage_ids,
            fingerprint,
        })
    }
}

pub fn build_dense_index(
    passages: &[Passage],
    provider: &dyn EmbeddingProvider,
) -> Result<DenseIndex> {
    DenseIndex::build(passages, provider)
}

pub fn dense_search(
    index: &DenseIndex,
    query: &str,
    k: usize,
    provider: &dyn EmbeddingProvider,
) -> Result<Ranking> {
    index.search(provider, query, k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorsHeader {
    pub dim: usize,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorRecord {
    pub id: String,
    pub vector: Vec<f32>,
}

/// Precomputed passage vectors: a header line, then one record per passage.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorsFile {
    pub header: VectorsHeader,
    pub records: Vec<VectorRecord>,
}

impl VectorsFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let malformed = |line: usize, message: String| Error::Malformed {
            path: path.to_owned(),
            line,
            message,
        };
        let header: VectorsHeader = loop {
            match lines.next() {
                Some((i, line)) => {
                    let line = line.map_err(|e| Error::io(path, e))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    break serde_json::from_str(&line)
                        .map_err(|e| malformed(i + 1, e.to_string()))?;
                }
                None => return Err(malformed(1, "missing vectors header".into())),
            }
        };
        let mut records = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| malformed(i + 1, e.to_string()))?);
        }
        Ok(Self { header, records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        (|| -> std::io::Result<()> {
            serde_json::to_writer(&mut w, &self.header)?;
            writeln!(w)?;
            crate::jsonl::write_to(&mut w, &self.records)?;
            w.flush()
        })()
        .map_err(|e| Error::io(path, e))
    }
}

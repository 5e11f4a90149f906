//! BM25 inverted index.
//!
//! Scores follow the Okapi form with the non-negative idf
//! `ln(1 + (N - df + 0.5) / (df + 0.5))`:
//!
//! ```text
//! score(q, d) = Σ_{t ∈ q} idf(t) · tf·(k1 + 1) / (tf + k1·(1 − b + b·|d| / avgdl))
//! ```
//!
//! Repeated query terms contribute once per occurrence.

mod codec;

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{Analyzer, AnalyzerConfig};
use crate::corpus::Passage;
use crate::error::{Error, Result};
use crate::fusion::{top_k, Ranking};

pub use codec::{FORMAT_VERSION, MAGIC};

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
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(Error::invalid(format!(
                "k1 must be positive, got {}",
                self.k1
            )));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::invalid(format!(
                "b must lie in [0, 1], got {}",
                self.b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub ordinal: u32,
    pub tf: u32,
}

#[derive(Debug, Clone)]
pub struct SparseIndex {
    terms: HashMap<String, u32>,
    /// Indexed by term id; each list strictly increasing by ordinal.
    postings: Vec<Vec<Posting>>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    passage_ids: Vec<String>,
    params: Bm25Params,
    analyzer: Analyzer,
}

impl SparseIndex {
    pub fn build(
        passages: &[Passage],
        params: Bm25Params,
        analyzer: AnalyzerConfig,
    ) -> Result<Self> {
        if passages.is_empty() {
            return Err(Error::invalid(
                "cannot build a sparse index over zero passages",
            ));
        }
        params.validate()?;
        let analyzer = Analyzer::new(analyzer);

        // Per-passage term counts in parallel, merged in ordinal order below.
        let per_passage: Vec<(u32, Vec<(String, u32)>)> = passages
            .par_iter()
            .map(|p| {
                let mut counts: HashMap<String, u32> = HashMap::new();
                let mut len = 0u32;
                analyzer.for_each_token(&p.text, |t| {
                    len += 1;
                    *counts.entry(t.to_owned()).or_default() += 1;
                });
                let mut counts: Vec<_> = counts.into_iter().collect();
                counts.sort_unstable();
                (len, counts)
            })
            .collect();

        let mut terms: HashMap<String, u32> = HashMap::new();
        let mut postings: Vec<Vec<Posting>> = Vec::new();
        let mut doc_lengths = Vec::with_capacity(passages.len());
        for (ordinal, (len, counts)) in per_passage.into_iter().enumerate() {
            doc_lengths.push(len);
            for (term, tf) in counts {
                let next = postings.len() as u32;
                let id = *terms.entry(term).or_insert(next);
                if id == next {
                    postings.push(Vec::new());
                }
                postings[id as usize].push(Posting {
                    ordinal: ordinal as u32,
                    tf,
                });
            }
        }

        Ok(Self::from_parts(
            terms,
            postings,
            doc_lengths,
            passages.iter().map(|p| p.id.clone()).collect(),
            params,
            analyzer,
        ))
    }

    fn from_parts(
        terms: HashMap<String, u32>,
        postings: Vec<Vec<Posting>>,
        doc_lengths: Vec<u32>,
        passage_ids: Vec<String>,
        params: Bm25Params,
        analyzer: Analyzer,
    ) -> Self {
        let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
        let avg_doc_length = total as f64 / doc_lengths.len().max(1) as f64;
        Self {
            terms,
            postings,
            doc_lengths,
            avg_doc_length,
            passage_ids,
            params,
            analyzer,
        }
    }

    pub fn len(&self) -> usize {
        self.passage_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passage_ids.is_empty()
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn analyzer(&self) -> &Analyzer {
        &self.analyzer
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn passage_ids(&self) -> &[String] {
        &self.passage_ids
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn postings(&self, term: &str) -> Option<&[Posting]> {
        self.terms
            .get(term)
            .map(|&id| self.postings[id as usize].as_slice())
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.passage_ids.len() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_score(&self, idf: f64, tf: u32, ordinal: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = f64::from(tf);
        let len = f64::from(self.doc_lengths[ordinal as usize]);
        // avg_doc_length is 0 only when every passage is empty, and then no postings exist.
        let norm = 1.0 - b + b * len / self.avg_doc_length;
        idf * tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    /// BM25 score of one passage, evaluated directly from the postings.
    pub fn score(&self, query: &str, ordinal: usize) -> Result<f64> {
        if ordinal >= self.len() {
            return Err(Error::invalid(format!(
                "passage ordinal {ordinal} out of range for {} passages",
                self.len()
            )));
        }
        let ordinal = ordinal as u32;
        let mut score = 0.0;
        self.analyzer.for_each_token(query, |t| {
            let Some(list) = self.postings(t) else { return };
            if let Ok(i) = list.binary_search_by_key(&ordinal, |p| p.ordinal) {
                score += self.term_score(self.idf(list.len()), list[i].tf, ordinal);
            }
        });
        Ok(score)
    }

    /// Top-k ordinals with positive score, descending, ties by ordinal.
    pub fn search_ordinals(&self, query: &str, k: usize) -> Vec<(u32, f64)> {
        let mut acc: HashMap<u32, f64> = HashMap::new();
        self.analyzer.for_each_token(query, |t| {
            let Some(list) = self.postings(t) else { return };
            let idf = self.idf(list.len());
            for p in list {
                *acc.entry(p.ordinal).or_insert(0.0) += self.term_score(idf, p.tf, p.ordinal);
            }
        });
        top_k(acc.into_iter().filter(|&(_, s)| s > 0.0), k)
    }

    pub fn search(&self, query: &str, k: usize) -> Ranking {
        Ranking::from_sorted_unchecked(
            self.search_ordinals(query, k)
                .into_iter()
                .map(|(o, s)| (self.passage_ids[o as usize].clone(), s))
                .collect(),
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        codec::save(self, path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        codec::load(path.as_ref())
    }
}

/// Free-function form of [`SparseIndex::build`].
pub fn build_sparse_index(
    passages: &[Passage],
    params: Bm25Params,
    analyzer: AnalyzerConfig,
) -> Result<SparseIndex> {
    SparseIndex::build(passages, params, analyzer)
}

pub fn bm25_score(index: &SparseIndex, query: &str, ordinal: usize) -> Result<f64> {
    index.score(query, ordinal)
}

pub fn sparse_search(index: &SparseIndex, query: &str, k: usize) -> Ranking {
    index.search(query, k)
}

//! Retrieve-read-combine question answering and its parameter search.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::PassageStore;
use crate::dense::{DenseIndex, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::eval::report::compensated_sum;
use crate::eval::{top_n_f1, OpenQAExample};
use crate::fusion::{
    check_weight, hybrid_search, l2_normalize, FusionConfig, Ranking, ScoredPassage,
};
use crate::reader::{AnswerCandidate, ReaderProvider};
use crate::sparse::SparseIndex;

pub const DEFAULT_IR_WEIGHT: f64 = 0.7;
pub const DEFAULT_K_SPARSE: usize = 100;
pub const DEFAULT_K_HYBRID: usize = 40;

/// Passage retrieval for one query.
///
/// `retrieve(q, k)` must be the length-`k` prefix of `retrieve(q, k2)` for any
/// `k2 >= k`; [`tune`] relies on this to read each question once.
pub trait Retriever: Send + Sync {
    fn retrieve(&self, query: &str, k: usize) -> Result<Ranking>;
}

pub struct SparseRetriever<'a> {
    pub index: &'a SparseIndex,
}

impl Retriever for SparseRetriever<'_> {
    fn retrieve(&self, query: &str, k: usize) -> Result<Ranking> {
        Ok(self.index.search(query, k))
    }
}

pub struct DenseRetriever<'a> {
    pub index: &'a DenseIndex,
    pub provider: &'a dyn EmbeddingProvider,
}

impl Retriever for DenseRetriever<'_> {
    fn retrieve(&self, query: &str, k: usize) -> Result<Ranking> {
        self.index.search(self.provider, query, k)
    }
}

pub struct HybridRetriever<'a> {
    pub sparse: &'a SparseIndex,
    pub dense: &'a DenseIndex,
    pub provider: &'a dyn EmbeddingProvider,
    pub fusion: FusionConfig,
}

impl Retriever for HybridRetriever<'_> {
    fn retrieve(&self, query: &str, k: usize) -> Result<Ranking> {
        hybrid_search(
            self.sparse,
            self.dense,
            self.provider,
            query,
            k,
            &self.fusion,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrieverMode {
    #[default]
    Sparse,
    Dense,
    Hybrid,
}

impl RetrieverMode {
    pub fn default_k(self) -> usize {
        match self {
            Self::Sparse => DEFAULT_K_SPARSE,
            Self::Dense | Self::Hybrid => DEFAULT_K_HYBRID,
        }
    }
}

impl fmt::Display for RetrieverMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sparse => "sparse",
            Self::Dense => "dense",
            Self::Hybrid => "hybrid",
        })
    }
}

impl FromStr for RetrieverMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(Self::Sparse),
            "dense" => Ok(Self::Dense),
            "hybrid" => Ok(Self::Hybrid),
            other => Err(Error::invalid(format!("unknown retriever mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrqaConfig {
    pub k: usize,
    pub ir_weight: f64,
    pub mode: RetrieverMode,
    pub fusion: FusionConfig,
}

impl OrqaConfig {
    pub fn for_mode(mode: RetrieverMode) -> Self {
        Self {
            k: mode.default_k(),
            ir_weight: DEFAULT_IR_WEIGHT,
            mode,
            fusion: FusionConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("K must be at least 1"));
        }
        check_weight(self.ir_weight)?;
        self.fusion.validate()
    }
}

impl Default for OrqaConfig {
    fn default() -> Self {
        Self::for_mode(RetrieverMode::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAnswer {
    #[serde(flatten)]
    pub candidate: AnswerCandidate,
    pub ir_score: f64,
    pub mrc_score: f64,
    pub ir_score_norm: f64,
    pub mrc_score_norm: f64,
    pub combined: f64,
}

/// A retrieved passage together with the reader's top answer in it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadPassage {
    pub retrieved: ScoredPassage,
    pub answer: AnswerCandidate,
}

/// Normalize IR and MRC scores over `reads`, combine, and sort.
///
/// Sorted by combined score descending, ties by passage id.
pub fn combine_answers(reads: &[ReadPassage], ir_weight: f64) -> Vec<RankedAnswer> {
    let ir: Vec<f64> = reads.iter().map(|r| r.retrieved.score).collect();
    let mrc: Vec<f64> = reads.iter().map(|r| r.answer.reader_score).collect();
    let (ir_n, mrc_n) = (l2_normalize(&ir), l2_normalize(&mrc));
    let mut out: Vec<RankedAnswer> = reads
        .iter()
        .zip(ir_n.iter().zip(&mrc_n))
        .map(|(r, (&i, &m))| RankedAnswer {
            candidate: r.answer.clone(),
            ir_score: r.retrieved.score,
            mrc_score: r.answer.reader_score,
            ir_score_norm: i,
            mrc_score_norm: m,
            combined: ir_weight * i + (1.0 - ir_weight) * m,
        })
        .collect();
    out.sort_by(|a, b| {
        b.combined
            .total_cmp(&a.combined)
            .then_with(|| a.candidate.passage_id.cmp(&b.candidate.passage_id))
    });
    out
}

/// A retriever, a reader and the passages they share.
#[derive(Clone, Copy)]
pub struct Orqa<'a> {
    pub retriever: &'a dyn Retriever,
    pub reader: &'a dyn ReaderProvider,
    pub store: &'a PassageStore,
}

impl Orqa<'_> {
    /// Retrieve `k` passages and read each, in retrieval order.
    pub fn read_top(&self, question: &str, k: usize) -> Result<Vec<ReadPassage>> {
        let mut ranking = self.retriever.retrieve(question, k)?;
        ranking.truncate(k);
        ranking
            .entries()
            .par_iter()
            .map(|e| {
                let passage = self.store.get(&e.passage_id)?;
                let answer = self.reader.read(question, passage)?;
                if !answer.is_consistent_with(passage) {
                    return Err(Error::Provider(format!(
                        "reader returned an invalid span {}..{} for passage {}",
                        answer.start, answer.end, passage.id
                    )));
                }
                Ok(ReadPassage {
                    retrieved: e.clone(),
                    answer,
                })
            })
            .collect()
    }

    pub fn answer(&self, question: &str, config: &OrqaConfig) -> Result<Vec<RankedAnswer>> {
        config.validate()?;
        Ok(combine_answers(
            &self.read_top(question, config.k)?,
            config.ir_weight,
        ))
    }
}

pub fn answer(
    question: &str,
    retriever: &dyn Retriever,
    reader: &dyn ReaderProvider,
    store: &PassageStore,
    config: &OrqaConfig,
) -> Result<Vec<RankedAnswer>> {
    Orqa {
        retriever,
        reader,
        store,
    }
    .answer(question, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    TopNF1(usize),
}

impl Default for Objective {
    fn default() -> Self {
        Self::TopNF1(1)
    }
}

impl Objective {
    fn score(self, answers: &[RankedAnswer], golds: &[String]) -> f64 {
        match self {
            Self::TopNF1(n) => {
                let texts: Vec<&str> = answers.iter().map(|a| a.candidate.text.as_str()).collect();
                top_n_f1(&texts, golds, n)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub k: usize,
    pub ir_weight: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub best: OrqaConfig,
    pub grid: Vec<GridPoint>,
}

/// Exhaustive search over `k_grid × weight_grid` for the best mean objective.
///
/// Ties go to the smaller K, then the smaller weight. Fields of `base` other
/// than K and the IR weight are kept.
pub fn tune(
    dev: &[OpenQAExample],
    system: &Orqa<'_>,
    base: &OrqaConfig,
    weight_grid: &[f64],
    k_grid: &[usize],
    objective: Objective,
) -> Result<TuneOutcome> {
    if dev.is_empty() {
        return Err(Error::invalid("tuning needs a non-empty dev set"));
    }
    if weight_grid.is_empty() || k_grid.is_empty() {
        return Err(Error::invalid("tuning grids must be non-empty"));
    }
    let mut ks = k_grid.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut ws = weight_grid.to_vec();
    for &w in &ws {
        check_weight(w)?;
    }
    ws.sort_by(f64::total_cmp);
    ws.dedup();
    if ks[0] == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    let max_k = ks[ks.len() - 1];

    let reads = dev
        .par_iter()
        .map(|ex| system.read_top(&ex.question, max_k))
        .collect::<Result<Vec<_>>>()?;

    let mut grid = Vec::with_capacity(ks.len() * ws.len());
    let mut best: Option<GridPoint> = None;
    for &k in &ks {
        for &w in &ws {
            let scores: Vec<f64> = dev
                .par_iter()
                .zip(&reads)
                .map(|(ex, r)| {
                    objective.score(&combine_answers(&r[..k.min(r.len())], w), &ex.answers)
                })
                .collect();
            let point = GridPoint {
                k,
                ir_weight: w,
                objective: compensated_sum(scores) / dev.len() as f64,
            };
            if best.is_none_or(|b| point.objective > b.objective) {
                best = Some(point);
            }
            grid.push(point);
        }
    }
    let best = best.expect("grids are non-empty");
    Ok(TuneOutcome {
        best: OrqaConfig {
            k: best.k,
            ir_weight: best.ir_weight,
            ..*base
        },
        grid,
    })
}

//! Hybrid sparse+dense open-retrieval question answering.
//!
//! The crate covers the whole offline and online path of an open-retrieval
//! QA system:
//!
//! * [`corpus`]: sentence segmentation and word-bounded passage chunking.
//! * [`sparse`]: a BM25 inverted index with a versioned on-disk format.
//! * [`dense`]: exact inner-product search over vectors from a pluggable
//!   [`dense::EmbeddingProvider`], including a feature-hashing test double.
//! * [`fusion`]: L2-normalized convex combination of sparse and dense scores.
//! * [`synthgen`]: parsing and localizing generator output into synthetic
//!   retrieval / MRC examples, plus inverse-cloze pairs.
//! * [`reader`]: the reading-comprehension boundary, a lexical baseline
//!   reader and roundtrip-consistency filtering.
//! * [`pipeline`]: retrieve, read, combine and rank answers; grid tuning.
//! * [`eval`]: datasets, EM / F1 / Match@k / Top-n F1 and a paired t-test.
//!
//! Neural models never live in this crate. They attach through the traits
//! in [`dense`], [`synthgen`] and [`reader`], either in-process or as a
//! subprocess speaking the line protocol in [`provider`].

pub mod analysis;
mod binio;
pub mod corpus;
pub mod dense;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod jsonl;
pub mod pipeline;
pub mod provider;
pub mod reader;
pub mod sparse;
pub mod synthgen;

pub use analysis::{Analyzer, AnalyzerConfig, StopWords};
pub use corpus::{Document, Passage, PassageStore, Sentence};
pub use dense::{DenseIndex, EmbeddingProvider, HashEmbedder};
pub use error::{Error, Result};
pub use fusion::{FusionConfig, Ranking, ScoredPassage};
pub use pipeline::{OrqaConfig, RankedAnswer, RetrieverMode};
pub use reader::{AnswerCandidate, LexicalReader, ReaderProvider};
pub use sparse::{Bm25Params, SparseIndex};
pub use synthgen::{GeneratorProvider, ParsedTriple, SyntheticExample};

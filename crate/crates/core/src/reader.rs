//! Reading comprehension boundary, the lexical baseline reader, and
//! roundtrip-consistency filtering of synthetic examples.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::Analyzer;
use crate::corpus::{segment_sentences, Passage, PassageStore};
use crate::error::{Error, Result};
use crate::eval::normalize_answer;
use crate::synthgen::SyntheticExample;

/// Default roundtrip threshold, on the scale of logit-sum span scores.
pub const DEFAULT_ROUNDTRIP_THRESHOLD: f64 = 7.0;

/// An extracted answer span. `start..end` is a byte range of the passage text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerCandidate {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub reader_score: f64,
    pub passage_id: String,
}

impl AnswerCandidate {
    pub fn is_consistent_with(&self, passage: &Passage) -> bool {
        self.end > self.start
            && passage.id == self.passage_id
            && passage.text.get(self.start..self.end) == Some(self.text.as_str())
    }
}

/// An extractive reader.
///
/// `score_span` on the span returned by `read` must reproduce its score.
pub trait ReaderProvider: Send + Sync {
    fn read(&self, question: &str, passage: &Passage) -> Result<AnswerCandidate>;
    fn score_span(
        &self,
        question: &str,
        passage: &Passage,
        start: usize,
        end: usize,
    ) -> Result<f64>;
}

/// Picks the sentence sharing the most distinct analyzed terms with the question.
/// A span scores the overlap of the sentences it touches, so cloze-style
/// questions that omit the answer still score their source sentence.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalReader {
    analyzer: Analyzer,
}

impl LexicalReader {
    pub fn new(analyzer: Analyzer) -> Self {
        Self { analyzer }
    }

    fn overlap(&self, question: &HashSet<String>, text: &str) -> f64 {
        let mut seen = HashSet::new();
        self.analyzer.for_each_token(text, |t| {
            if question.contains(t) && !seen.contains(t) {
                seen.insert(t.to_owned());
            }
        });
        seen.len() as f64
    }

    fn question_terms(&self, question: &str) -> HashSet<String> {
        self.analyzer.analyze(question).into_iter().collect()
    }
}

impl ReaderProvider for LexicalReader {
    fn read(&self, question: &str, passage: &Passage) -> Result<AnswerCandidate> {
        let q = self.question_terms(question);
        let mut best: Option<(f64, usize, usize)> = None;
        for s in segment_sentences(&passage.text) {
            let score = self.overlap(&q, s.text);
            if best.is_none_or(|(b, _, _)| score > b) {
                best = Some((score, s.start, s.end));
            }
        }
        let (reader_score, start, end) = best
            .ok_or_else(|| Error::invalid(format!("passage {} has no text to read", passage.id)))?;
        Ok(AnswerCandidate {
            text: passage.text[start..end].to_owned(),
            start,
            end,
            reader_score,
            passage_id: passage.id.clone(),
        })
    }

    fn score_span(
        &self,
        question: &str,
        passage: &Passage,
        start: usize,
        end: usize,
    ) -> Result<f64> {
        passage
            .text
            .get(start..end)
            .filter(|_| end > start)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "invalid span {start}..{end} in passage {}",
                    passage.id
                ))
            })?;
        let sentences = segment_sentences(&passage.text);
        let from = sentences
            .iter()
            .rev()
            .find(|s| s.start <= start)
            .map_or(start, |s| s.start);
        let to = sentences
            .iter()
            .find(|s| s.end >= end)
            .map_or(end, |s| s.end);
        Ok(self.overlap(&self.question_terms(question), &passage.text[from..to]))
    }
}

pub fn lexical_read(question: &str, passage: &Passage) -> Result<AnswerCandidate> {
    LexicalReader::default().read(question, passage)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterMode {
    /// Keep when the generated span scores at least the threshold.
    #[default]
    ScoreOnly,
    /// Additionally require the reader's own answer to match the generated one.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "kebab-case")]
pub enum DropReason {
    BelowThreshold,
    AnswerMismatch(String),
    ReaderError(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroppedExample {
    pub example: SyntheticExample,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<SyntheticExample>,
    pub dropped: Vec<DroppedExample>,
}

/// Why `ex` should be dropped, if it should. Records the roundtrip score.
fn verdict(
    ex: &mut SyntheticExample,
    store: &PassageStore,
    reader: &dyn ReaderProvider,
    threshold: f64,
    mode: FilterMode,
) -> Option<DropReason> {
    let passage = match store.get(&ex.passage_id) {
        Ok(p) => p,
        Err(e) => return Some(DropReason::ReaderError(e.to_string())),
    };
    let score = match reader.score_span(&ex.question, passage, ex.answer_start, ex.answer_end()) {
        Ok(s) => s,
        Err(e) => return Some(DropReason::ReaderError(e.to_string())),
    };
    ex.roundtrip_score = Some(score);
    if score.is_nan() || score < threshold {
        return Some(DropReason::BelowThreshold);
    }
    if mode == FilterMode::Strict {
        match reader.read(&ex.question, passage) {
            Ok(pred) if normalize_answer(&pred.text) == normalize_answer(&ex.answer_text) => {}
            Ok(pred) => return Some(DropReason::AnswerMismatch(pred.text)),
            Err(e) => return Some(DropReason::ReaderError(e.to_string())),
        }
    }
    None
}

/// Partition examples by the reader's score of their generated answer span.
///
/// Input order is preserved within both parts; every example's
/// `roundtrip_score` is set when the reader produced one.
pub fn roundtrip_filter(
    examples: Vec<SyntheticExample>,
    store: &PassageStore,
    reader: &dyn ReaderProvider,
    threshold: f64,
    mode: FilterMode,
) -> FilterOutcome {
    let results: Vec<_> = examples
        .into_par_iter()
        .map(|mut ex| {
            let reason = verdict(&mut ex, store, reader, threshold, mode);
            (ex, reason)
        })
        .collect();
    let mut out = FilterOutcome::default();
    for (example, reason) in results {
        match reason {
            None => out.kept.push(example),
            Some(reason) => out.dropped.push(DroppedExample { example, reason }),
        }
    }
    out
}

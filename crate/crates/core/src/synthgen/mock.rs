//! Template generator for running the synthetic-data pipeline without a model.

use std::collections::HashSet;
use std::hash::Hasher;

use fnv::FnvHasher;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{marker_key, GeneratedSequence, GeneratorProvider, ParsedTriple, SEPARATOR};
use crate::corpus::{segment_sentences, Sentence};
use crate::error::Result;

/// Clozes a sentence into a question.
///
/// Numbers become "How many" questions, capitalized non-initial words become
/// "Who" questions, anything else a "What" question over a short word span.
/// Only the `k` leading eligible sentences are sampled from; `p` is accepted
/// for interface parity and ignored. Output is a pure function of
/// `(seed, passage text, n, k)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockGenerator {
    seed: u64,
}

impl MockGenerator {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

fn strip(word: &str) -> &str {
    word.trim_matches(|c: char| !c.is_alphanumeric())
}

/// Sentences the markers resolve to unambiguously.
fn eligible<'a>(sentences: &'a [Sentence<'a>]) -> Vec<&'a Sentence<'a>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for s in sentences {
        let mut words = s.text.split_whitespace();
        let (Some(first), last) = (words.next(), words.next_back()) else {
            continue;
        };
        let key = (marker_key(first), marker_key(last.unwrap_or(first)));
        if !seen.insert(key) || s.text.contains(SEPARATOR) {
            continue;
        }
        if s.text.split_whitespace().any(|w| !strip(w).is_empty()) {
            out.push(s);
        }
    }
    out
}

fn cloze(sentence: &str, rng: &mut ChaCha8Rng) -> (String, String) {
    let words: Vec<&str> = sentence.split_whitespace().collect();
    let numeric: Vec<&str> = words[1..]
        .iter()
        .map(|w| strip(w))
        .filter(|w| w.chars().any(|c| c.is_ascii_digit()))
        .collect();
    let proper: Vec<&str> = words[1..]
        .iter()
        .map(|w| strip(w))
        .filter(|w| w.chars().next().is_some_and(char::is_uppercase))
        .collect();

    let (wh, answer): (&str, String) = if let Some(n) = numeric.choose(rng) {
        ("how many", (*n).to_owned())
    } else if let Some(name) = proper.choose(rng) {
        ("who", (*name).to_owned())
    } else {
        let content: Vec<&str> = words
            .iter()
            .map(|w| strip(w))
            .filter(|w| !w.is_empty())
            .collect();
        let len = rng.gen_range(1..=content.len().min(3));
        let start = rng.gen_range(0..=content.len() - len);
        let span = &content[start..start + len];
        // Keep the span only if it is contiguous in the sentence as written.
        let joined = span.join(" ");
        if sentence.contains(&joined) {
            ("what", joined)
        } else {
            ("what", span[0].to_owned())
        }
    };

    let body = sentence
        .replacen(&answer, wh, 1)
        .trim_end_matches(['.', '!', '?'])
        .to_owned();
    let mut question = body;
    if let Some(first) = question.get(..1) {
        let upper = first.to_uppercase();
        question.replace_range(..1, &upper);
    }
    question.push('?');
    (answer, question)
}

impl GeneratorProvider for MockGenerator {
    fn generate(
        &self,
        passage_text: &str,
        n: usize,
        k: usize,
        _p: f64,
    ) -> Result<Vec<GeneratedSequence>> {
        let sentences = segment_sentences(passage_text);
        let mut pool = eligible(&sentences);
        pool.truncate(k.max(1));
        if pool.is_empty() {
            return Ok(Vec::new());
        }
        let mut h = FnvHasher::with_key(self.seed);
        h.write(passage_text.as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish());

        Ok((0..n)
            .map(|_| {
                let s = pool[rng.gen_range(0..pool.len())];
                let mut words = s.text.split_whitespace();
                let first = words.next().unwrap_or_default();
                let last = words.next_back().unwrap_or(first);
                let (answer_text, question) = cloze(s.text, &mut rng);
                ParsedTriple {
                    s_first: first.to_owned(),
                    s_last: last.to_owned(),
                    answer_text,
                    question,
                }
                .format()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::super::{locate_answer, parse_generated};
    use super::*;
    use crate::corpus::Passage;

    #[test]
    fn deterministic_and_well_formed() {
        let text = super::super::tests::TABLE1_PASSAGE;
        let g = MockGenerator::new(3);
        let a = g.generate(text, 5, 10, 0.95).unwrap();
        assert_eq!(a, g.generate(text, 5, 10, 0.95).unwrap());
        assert_eq!(a.len(), 5);
        let p = Passage::new("p", text);
        for seq in &a {
            let t = parse_generated(seq).unwrap();
            let ex = locate_answer(&p, &t).unwrap();
            assert!(ex.is_consistent_with(&p));
            assert!(t.question.ends_with('?'));
        }
    }

    #[test]
    fn question_types() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, q) = cloze("Over 1,000,000 patients were reported.", &mut rng);
        assert_eq!(a, "1,000,000");
        assert_eq!(q, "Over how many patients were reported?");
        let (a, q) = cloze("The virus reached Wuhan first.", &mut rng);
        assert_eq!(a, "Wuhan");
        assert_eq!(q, "The virus reached who first?");
    }

    #[test]
    fn empty_passage_yields_nothing() {
        assert!(MockGenerator::new(0)
            .generate("", 5, 10, 0.95)
            .unwrap()
            .is_empty());
    }
}

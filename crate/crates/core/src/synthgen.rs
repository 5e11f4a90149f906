//! Synthetic example construction from generator output.
//!
//! A generator emits `s_f s_l [SEP] answer [SEP] question`, where `s_f` and
//! `s_l` are the first and last words of the sentence holding the answer.
//! The sentence anchors the answer inside the passage, which matters when
//! the answer string occurs more than once.

mod mock;

use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{segment_sentences, Passage};
use crate::error::{Error, Result};

pub use mock::MockGenerator;

pub const SEPARATOR: &str = "[SEP]";

pub const DEFAULT_EXAMPLES_PER_PASSAGE: usize = 5;
pub const DEFAULT_TOP_K: usize = 10;
pub const DEFAULT_TOP_P: f64 = 0.95;

/// Raw generator output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GeneratedSequence(pub String);

impl From<&str> for GeneratedSequence {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedTriple {
    pub s_first: String,
    pub s_last: String,
    pub answer_text: String,
    pub question: String,
}

impl ParsedTriple {
    /// Inverse of [`parse_generated`] for well-formed triples.
    pub fn format(&self) -> GeneratedSequence {
        GeneratedSequence(format!(
            "{} {} {SEPARATOR} {} {SEPARATOR} {}",
            self.s_first, self.s_last, self.answer_text, self.question
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("expected 2 separators, found {0}")]
    SeparatorCount(usize),
    #[error("sentence marker segment must hold exactly 2 words, found {0}")]
    SentenceMarkers(usize),
    #[error("empty answer")]
    EmptyAnswer,
    #[error("empty question")]
    EmptyQuestion,
}

pub fn parse_generated(seq: &GeneratedSequence) -> Result<ParsedTriple, ParseError> {
    let parts: Vec<&str> = seq.0.split(SEPARATOR).collect();
    if parts.len() != 3 {
        return Err(ParseError::SeparatorCount(parts.len() - 1));
    }
    let markers: Vec<&str> = parts[0].split_whitespace().collect();
    if markers.len() != 2 {
        return Err(ParseError::SentenceMarkers(markers.len()));
    }
    let answer_text = parts[1].trim();
    if answer_text.is_empty() {
        return Err(ParseError::EmptyAnswer);
    }
    let question = parts[2].trim();
    if question.is_empty() {
        return Err(ParseError::EmptyQuestion);
    }
    Ok(ParsedTriple {
        s_first: markers[0].to_owned(),
        s_last: markers[1].to_owned(),
        answer_text: answer_text.to_owned(),
        question: question.to_owned(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LocalizationError {
    #[error("no sentence in {passage_id} starts with {s_first:?} and ends with {s_last:?}")]
    NoMatchingSentence {
        passage_id: String,
        s_first: String,
        s_last: String,
    },
    #[error("answer {answer:?} not found in the matched sentence of {passage_id}")]
    AnswerNotInSentence { passage_id: String, answer: String },
}

/// Ambiguities resolved while localizing an example.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocateFlags {
    /// More than one sentence matched the markers; the first was used.
    pub multiple_sentences: bool,
    /// The answer occurs more than once in its sentence; the first was used.
    pub multiple_occurrences: bool,
    /// Only a case-insensitive match was found.
    pub case_insensitive: bool,
}

impl LocateFlags {
    pub fn any(&self) -> bool {
        self.multiple_sentences || self.multiple_occurrences || self.case_insensitive
    }
}

/// A localized (passage, question, answer) triple. Offsets are byte offsets
/// into the passage text.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticExample {
    pub passage_id: String,
    pub question: String,
    pub answer_text: String,
    pub answer_start: usize,
    pub sentence_span: (usize, usize),
    pub roundtrip_score: Option<f64>,
    pub flags: LocateFlags,
}

impl SyntheticExample {
    pub fn answer_end(&self) -> usize {
        self.answer_start + self.answer_text.len()
    }

    /// The span invariant against the owning passage.
    pub fn is_consistent_with(&self, passage: &Passage) -> bool {
        passage.id == self.passage_id
            && passage.text.get(self.answer_start..self.answer_end())
                == Some(self.answer_text.as_str())
            && self.sentence_span.0 <= self.answer_start
            && self.answer_end() <= self.sentence_span.1
            && self.sentence_span.1 <= passage.text.len()
    }

    /// Rebuild an example from a stored MRC record. The sentence span is the
    /// sentence containing the answer start.
    pub fn from_record(record: &MrcRecord, passage: &Passage) -> Result<Self> {
        let start = char_to_byte(&passage.text, record.answer_start).ok_or_else(|| {
            Error::invalid(format!(
                "answer_start {} beyond passage {}",
                record.answer_start, passage.id
            ))
        })?;
        let end = start + record.answer_text.len();
        if passage.text.get(start..end) != Some(record.answer_text.as_str()) {
            return Err(Error::invalid(format!(
                "answer {:?} not at offset {} of passage {}",
                record.answer_text, record.answer_start, passage.id
            )));
        }
        let sentence_span = segment_sentences(&passage.text)
            .into_iter()
            .find(|s| s.start <= start && end <= s.end)
            .map_or((start, end), |s| (s.start, s.end));
        Ok(Self {
            passage_id: passage.id.clone(),
            question: record.question.clone(),
            answer_text: record.answer_text.clone(),
            answer_start: start,
            sentence_span,
            roundtrip_score: record.roundtrip_score,
            flags: LocateFlags::default(),
        })
    }

    pub fn to_record(&self, passage: &Passage) -> MrcRecord {
        MrcRecord {
            passage_id: self.passage_id.clone(),
            question: self.question.clone(),
            answer_text: self.answer_text.clone(),
            answer_start: byte_to_char(&passage.text, self.answer_start),
            roundtrip_score: self.roundtrip_score,
        }
    }

    pub fn to_retrieval_pair(&self) -> RetrievalPair {
        RetrievalPair {
            question: self.question.clone(),
            positive_passage_id: self.passage_id.clone(),
        }
    }
}

/// Retrieval training record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalPair {
    pub question: String,
    pub positive_passage_id: String,
}

/// Reading-comprehension training record. `answer_start` counts characters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrcRecord {
    pub passage_id: String,
    pub question: String,
    pub answer_text: String,
    pub answer_start: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roundtrip_score: Option<f64>,
}

pub(crate) fn byte_to_char(text: &str, byte: usize) -> usize {
    text[..byte].chars().count()
}

pub(crate) fn char_to_byte(text: &str, chars: usize) -> Option<usize> {
    if chars == 0 {
        return Some(0);
    }
    match text.char_indices().nth(chars) {
        Some((b, _)) => Some(b),
        None if text.chars().count() == chars => Some(text.len()),
        None => None,
    }
}

fn marker_key(word: &str) -> String {
    word.trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

/// Byte span of the first case-insensitive occurrence of `needle` in `hay`.
fn find_case_insensitive(hay: &str, needle: &str) -> Option<(usize, usize)> {
    let target: Vec<char> = needle.chars().flat_map(char::to_lowercase).collect();
    if target.is_empty() {
        return None;
    }
    'outer: for (i, _) in hay.char_indices() {
        let mut k = 0;
        for (j, c) in hay[i..].char_indices() {
            for lc in c.to_lowercase() {
                if k >= target.len() || lc != target[k] {
                    continue 'outer;
                }
                k += 1;
            }
            if k == target.len() {
                return Some((i, i + j + c.len_utf8()));
            }
        }
    }
    None
}

/// Anchor the generated answer inside `passage` using the sentence markers.
pub fn locate_answer(
    passage: &Passage,
    triple: &ParsedTriple,
) -> Result<SyntheticExample, LocalizationError> {
    let want = (marker_key(&triple.s_first), marker_key(&triple.s_last));
    let sentences = segment_sentences(&passage.text);
    let mut matches = sentences.iter().filter(|s| {
        let mut words = s.text.split_whitespace();
        let first = words.next().map(marker_key);
        let last = words.next_back().map(marker_key).or_else(|| first.clone());
        first.as_deref() == Some(want.0.as_str()) && last.as_deref() == Some(want.1.as_str())
    });
    let Some(sentence) = matches.next() else {
        return Err(LocalizationError::NoMatchingSentence {
            passage_id: passage.id.clone(),
            s_first: triple.s_first.clone(),
            s_last: triple.s_last.clone(),
        });
    };
    let mut flags = LocateFlags {
        multiple_sentences: matches.next().is_some(),
        ..LocateFlags::default()
    };

    let (rel_start, rel_end) = match sentence.text.find(&triple.answer_text) {
        Some(i) => {
            flags.multiple_occurrences = sentence.text[i + 1..].contains(&triple.answer_text);
            (i, i + triple.answer_text.len())
        }
        None => {
            let (s, e) =
                find_case_insensitive(sentence.text, &triple.answer_text).ok_or_else(|| {
                    LocalizationError::AnswerNotInSentence {
                        passage_id: passage.id.clone(),
                        answer: triple.answer_text.clone(),
                    }
                })?;
            flags.case_insensitive = true;
            flags.multiple_occurrences =
                find_case_insensitive(&sentence.text[e..], &triple.answer_text).is_some();
            (s, e)
        }
    };
    let start = sentence.start + rel_start;
    let end = sentence.start + rel_end;
    Ok(SyntheticExample {
        passage_id: passage.id.clone(),
        question: triple.question.clone(),
        answer_text: passage.text[start..end].to_owned(),
        answer_start: start,
        sentence_span: (sentence.start, sentence.end),
        roundtrip_score: None,
        flags,
    })
}

/// Sampling question generator. `k` and `p` are the top-k / top-p controls.
pub trait GeneratorProvider: Send + Sync {
    fn generate(
        &self,
        passage_text: &str,
        n: usize,
        k: usize,
        p: f64,
    ) -> Result<Vec<GeneratedSequence>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub n_per_passage: usize,
    pub top_k: usize,
    pub top_p: f64,
    /// Extra attempts after a provider failure, per passage.
    pub retries: usize,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            n_per_passage: DEFAULT_EXAMPLES_PER_PASSAGE,
            top_k: DEFAULT_TOP_K,
            top_p: DEFAULT_TOP_P,
            retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub passage_id: String,
    pub generation_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationOutput {
    /// Sorted by passage id, then generation index.
    pub examples: Vec<SyntheticExample>,
    pub skips: Vec<SkipRecord>,
}

impl GenerationOutput {
    pub fn flagged(&self) -> usize {
        self.examples.iter().filter(|e| e.flags.any()).count()
    }
}

fn generate_with_retry(
    provider: &dyn GeneratorProvider,
    passage: &Passage,
    params: &GenerationParams,
) -> Result<Vec<GeneratedSequence>> {
    let mut last = None;
    for _ in 0..=params.retries {
        match provider.generate(
            &passage.text,
            params.n_per_passage,
            params.top_k,
            params.top_p,
        ) {
            Ok(mut seqs) => {
                seqs.truncate(params.n_per_passage);
                return Ok(seqs);
            }
            Err(e) => last = Some(e),
        }
    }
    Err(Error::Provider(format!(
        "generation failed for passage {:?} after {} attempts: {}",
        passage.id,
        params.retries + 1,
        last.map_or_else(String::new, |e| e.to_string())
    )))
}

/// Generate, parse and localize examples for every passage.
pub fn generate_examples(
    passages: &[Passage],
    provider: &dyn GeneratorProvider,
    params: &GenerationParams,
) -> Result<GenerationOutput> {
    let mut order: Vec<&Passage> = passages.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));

    let per_passage: Vec<(Vec<SyntheticExample>, Vec<SkipRecord>)> = order
        .par_iter()
        .map(|passage| {
            let seqs = generate_with_retry(provider, passage, params)?;
            let mut kept = Vec::new();
            let mut skipped = Vec::new();
            for (i, seq) in seqs.iter().enumerate() {
                let outcome = parse_generated(seq)
                    .map_err(Error::from)
                    .and_then(|t| locate_answer(passage, &t).map_err(Error::from));
                match outcome {
                    Ok(ex) => kept.push(ex),
                    Err(e) => skipped.push(SkipRecord {
                        passage_id: passage.id.clone(),
                        generation_index: i,
                        reason: e.to_string(),
                    }),
                }
            }
            Ok((kept, skipped))
        })
        .collect::<Result<_>>()?;

    let mut out = GenerationOutput::default();
    for (kept, skipped) in per_passage {
        out.examples.extend(kept);
        out.skips.extend(skipped);
    }
    Ok(out)
}

/// An inverse-cloze training pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IctPair {
    pub query: String,
    pub context: String,
    pub passage_id: String,
}

impl fmt::Display for IctPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} => {}", self.query, self.context)
    }
}

fn squash_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Mask sentence `sentence_index` out of `passage`: it becomes the query and
/// the remaining sentences the context.
pub fn make_ict_pair(passage: &Passage, sentence_index: usize) -> Result<IctPair> {
    let sentences = segment_sentences(&passage.text);
    if sentences.len() < 2 {
        return Err(Error::invalid(format!(
            "passage {} has {} sentence(s); an inverse-cloze pair needs at least 2",
            passage.id,
            sentences.len()
        )));
    }
    if sentence_index >= sentences.len() {
        return Err(Error::invalid(format!(
            "sentence index {sentence_index} out of range for {} sentences",
            sentences.len()
        )));
    }
    let context = sentences
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != sentence_index)
        .map(|(_, s)| s.text)
        .collect::<Vec<_>>()
        .join(" ");
    Ok(IctPair {
        query: squash_ws(sentences[sentence_index].text),
        context: squash_ws(&context),
        passage_id: passage.id.clone(),
    })
}

/// [`make_ict_pair`] with the sentence drawn uniformly from `rng`.
pub fn sample_ict_pair(passage: &Passage, rng: &mut impl Rng) -> Result<IctPair> {
    let n = segment_sentences(&passage.text).len();
    if n < 2 {
        return make_ict_pair(passage, 0);
    }
    make_ict_pair(passage, rng.gen_range(0..n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    pub(super) const TABLE1_PASSAGE: &str = "Since December 2019, when the first patient with a confirmed case of COVID-19 was reported in Wuhan, China, over 1,000,000 patients with confirmed cases have been reported worldwide. It has been reported that the most common symptoms include fever, fatigue, dry cough, anorexia, and dyspnea. Meanwhile, less common symptoms are nasal congestion";

    const TABLE1_SEQ: &str = "It dyspnea. [SEP] fever, fatigue, dry cough, anorexia, and dyspnea [SEP] What are the most common symptoms of COVID-19?";

    #[test]
    fn parses_generated_sequence() {
        let t = parse_generated(&TABLE1_SEQ.into()).unwrap();
        assert_eq!(t.s_first, "It");
        assert_eq!(t.s_last, "dyspnea.");
        assert_eq!(
            t.answer_text,
            "fever, fatigue, dry cough, anorexia, and dyspnea"
        );
        assert_eq!(t.question, "What are the most common symptoms of COVID-19?");
    }

    #[test]
    fn parse_errors() {
        assert_eq!(
            parse_generated(&"a b [SEP] c".into()),
            Err(ParseError::SeparatorCount(1))
        );
        assert_eq!(
            parse_generated(&"a b [SEP] c [SEP] d [SEP] e".into()),
            Err(ParseError::SeparatorCount(3))
        );
        assert_eq!(
            parse_generated(&"a [SEP] c [SEP] d".into()),
            Err(ParseError::SentenceMarkers(1))
        );
        assert_eq!(
            parse_generated(&"a b c [SEP] c [SEP] d".into()),
            Err(ParseError::SentenceMarkers(3))
        );
        assert_eq!(
            parse_generated(&"a b [SEP]  [SEP] d".into()),
            Err(ParseError::EmptyAnswer)
        );
        assert_eq!(
            parse_generated(&"a b [SEP] c [SEP] ".into()),
            Err(ParseError::EmptyQuestion)
        );
    }

    #[test]
    fn locates_table1_answer() {
        let p = Passage::new("cord#0", TABLE1_PASSAGE);
        let t = parse_generated(&TABLE1_SEQ.into()).unwrap();
        let ex = locate_answer(&p, &t).unwrap();
        let sentence = &p.text[ex.sentence_span.0..ex.sentence_span.1];
        assert!(sentence.starts_with("It has been reported"));
        assert_eq!(
            ex.answer_text,
            "fever, fatigue, dry cough, anorexia, and dyspnea"
        );
        assert!(ex.is_consistent_with(&p));
        assert!(!ex.flags.any());
    }

    #[test]
    fn unmatched_markers() {
        let p = Passage::new("p", TABLE1_PASSAGE);
        let t = ParsedTriple {
            s_first: "Nothing".into(),
            s_last: "here".into(),
            answer_text: "fever".into(),
            question: "Q?".into(),
        };
        assert!(matches!(
            locate_answer(&p, &t),
            Err(LocalizationError::NoMatchingSentence { .. })
        ));
        let t = ParsedTriple {
            s_first: "it".into(),
            s_last: "DYSPNEA".into(),
            answer_text: "headache".into(),
            question: "Q?".into(),
        };
        assert!(matches!(
            locate_answer(&p, &t),
            Err(LocalizationError::AnswerNotInSentence { .. })
        ));
    }

    #[test]
    fn sentence_anchor_beats_earlier_occurrence() {
        let p = Passage::new(
            "p",
            "Fever was rare in 2019. Patients later showed fever and cough.",
        );
        let t = ParsedTriple {
            s_first: "patients".into(),
            s_last: "cough".into(),
            answer_text: "fever".into(),
            question: "What did patients show?".into(),
        };
        let ex = locate_answer(&p, &t).unwrap();
        assert_eq!(ex.answer_start, p.text.rfind("fever").unwrap());
        assert!(!ex.flags.case_insensitive);
    }

    #[test]
    fn case_insensitive_fallback_and_flags() {
        let p = Passage::new("p", "Dry Cough and dry cough. Other text here.");
        let t = ParsedTriple {
            s_first: "dry".into(),
            s_last: "cough.".into(),
            answer_text: "DRY COUGH".into(),
            question: "Q?".into(),
        };
        let ex = locate_answer(&p, &t).unwrap();
        assert_eq!(ex.answer_text, "Dry Cough");
        assert_eq!(ex.answer_start, 0);
        assert!(ex.flags.case_insensitive && ex.flags.multiple_occurrences);
        assert!(ex.is_consistent_with(&p));
    }

    #[test]
    fn find_case_insensitive_unicode() {
        assert_eq!(find_case_insensitive("xx ÉCOLE yy", "école"), Some((3, 9)));
        assert_eq!(find_case_insensitive("abc", ""), None);
        assert_eq!(find_case_insensitive("abc", "abcd"), None);
    }

    struct HalfBroken;
    impl GeneratorProvider for HalfBroken {
        fn generate(
            &self,
            text: &str,
            _n: usize,
            _k: usize,
            _p: f64,
        ) -> Result<Vec<GeneratedSequence>> {
            let s = &segment_sentences(text)[0];
            let mut w = s.text.split_whitespace();
            let first = w.next().unwrap();
            let last = w.next_back().unwrap_or(first);
            let answer = s.text.split_whitespace().nth(1).unwrap();
            Ok(vec![
                GeneratedSequence(format!("{first} {last} [SEP] {answer} [SEP] what?")),
                GeneratedSequence("broken [SEP] output".into()),
            ])
        }
    }

    #[test]
    fn generation_counts_and_order() {
        let passages: Vec<Passage> = (0..10)
            .rev()
            .map(|i| {
                Passage::new(
                    format!("p{i}"),
                    format!("Alpha beta{i} gamma. Delta epsilon."),
                )
            })
            .collect();
        let out = generate_examples(&passages, &HalfBroken, &GenerationParams::default()).unwrap();
        assert_eq!(out.examples.len(), 10);
        assert_eq!(out.skips.len(), 10);
        let ids: Vec<&str> = out.examples.iter().map(|e| e.passage_id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        assert_eq!(ids, sorted);
        assert!(out.skips.iter().all(|s| s.generation_index == 1));
        assert!(
            generate_examples(&[], &HalfBroken, &GenerationParams::default())
                .unwrap()
                .examples
                .is_empty()
        );
    }

    #[test]
    fn default_generation_params() {
        let d = GenerationParams::default();
        assert_eq!((d.n_per_passage, d.top_k, d.top_p), (5, 10, 0.95));
    }

    struct Failing(std::sync::atomic::AtomicUsize);
    impl GeneratorProvider for Failing {
        fn generate(&self, _: &str, _: usize, _: usize, _: f64) -> Result<Vec<GeneratedSequence>> {
            self.0.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Err(Error::Provider("boom".into()))
        }
    }

    #[test]
    fn provider_failure_after_retries() {
        let f = Failing(Default::default());
        let params = GenerationParams {
            retries: 3,
            ..GenerationParams::default()
        };
        let err = generate_examples(&[Passage::new("p", "A b.")], &f, &params).unwrap_err();
        assert!(err.to_string().contains("after 4 attempts"));
        assert_eq!(f.0.load(std::sync::atomic::Ordering::SeqCst), 4);
    }

    #[test]
    fn records_carry_same_ids() {
        let p = Passage::new("cord#0", TABLE1_PASSAGE);
        let ex = locate_answer(&p, &parse_generated(&TABLE1_SEQ.into()).unwrap()).unwrap();
        let pair = ex.to_retrieval_pair();
        let rec = ex.to_record(&p);
        assert_eq!(pair.positive_passage_id, rec.passage_id);
        assert_eq!(pair.question, rec.question);
        let back = SyntheticExample::from_record(&rec, &p).unwrap();
        assert_eq!(back.answer_start, ex.answer_start);
        assert_eq!(back.sentence_span, ex.sentence_span);
    }

    #[test]
    fn char_offsets_in_records() {
        let p = Passage::new("p", "Ünïcode first. Then fever here.");
        let ex = SyntheticExample {
            passage_id: "p".into(),
            question: "q".into(),
            answer_text: "fever".into(),
            answer_start: p.text.find("fever").unwrap(),
            sentence_span: (0, p.text.len()),
            roundtrip_score: None,
            flags: LocateFlags::default(),
        };
        let rec = ex.to_record(&p);
        assert_eq!(rec.answer_start, "Ünïcode first. Then ".chars().count());
        assert_eq!(
            SyntheticExample::from_record(&rec, &p)
                .unwrap()
                .answer_start,
            ex.answer_start
        );
        let bad = MrcRecord {
            answer_start: 1,
            ..rec
        };
        assert!(SyntheticExample::from_record(&bad, &p).is_err());
    }

    #[test]
    fn ict_pairs() {
        let p = Passage::new("p", "S one. S two.");
        let a = make_ict_pair(&p, 0).unwrap();
        assert_eq!((a.query.as_str(), a.context.as_str()), ("S one.", "S two."));
        let b = make_ict_pair(&p, 1).unwrap();
        assert_eq!((b.query.as_str(), b.context.as_str()), ("S two.", "S one."));

        let p3 = Passage::new("p", "First one.  Second one.\nThird one.");
        let c = make_ict_pair(&p3, 1).unwrap();
        assert_eq!(c.query, "Second one.");
        assert_eq!(c.context, "First one. Third one.");

        assert!(make_ict_pair(&Passage::new("s", "Only one."), 0).is_err());
        assert!(make_ict_pair(&p, 2).is_err());

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let x = sample_ict_pair(&p3, &mut rng).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        assert_eq!(sample_ict_pair(&p3, &mut rng).unwrap(), x);
    }

    proptest! {
        #[test]
        fn format_then_parse_is_identity(
            f in "[A-Za-z0-9,.]{1,8}", l in "[A-Za-z0-9,.]{1,8}",
            a in "[a-z0-9][a-z0-9 ,]{0,20}[a-z0-9]", q in "[A-Z][a-z ]{0,30}\\?"
        ) {
            let t = ParsedTriple { s_first: f, s_last: l, answer_text: a, question: q };
            prop_assert_eq!(parse_generated(&t.format()).unwrap(), t);
        }

        #[test]
        fn ict_query_and_context_partition_sentences(n in 2usize..6, pick in 0usize..6) {
            let text = (0..n).map(|i| format!("Sentence number {i} ends.")).collect::<Vec<_>>().join(" ");
            let p = Passage::new("p", text.clone());
            let idx = pick % n;
            let pair = make_ict_pair(&p, idx).unwrap();
            let sentences: Vec<String> = segment_sentences(&text).iter().map(|s| s.text.to_owned()).collect();
            prop_assert_eq!(&pair.query, &sentences[idx]);
            let mut rest = sentences.clone();
            rest.remove(idx);
            prop_assert_eq!(pair.context, rest.join(" "));
        }
    }
}

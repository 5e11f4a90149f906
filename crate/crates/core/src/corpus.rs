//! Documents, sentence segmentation and passage chunking.
//!
//! All offsets in this module are byte offsets into the owning string and
//! always fall on `char` boundaries. File formats that exchange offsets with
//! other tools convert to character offsets at the boundary (see
//! [`crate::eval::dataset`]).

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default passage limit for retrieval chunks, in whitespace words.
pub const DEFAULT_MAX_WORDS: usize = 120;
/// Default chunk limit for synthetic generation, in tokenizer units.
pub const DEFAULT_GENERATION_MAX_TOKENS: usize = 288;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
    pub position: usize,
    pub word_count: usize,
    /// Set when the passage is a piece of a single sentence that exceeded the limit.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub hard_split: bool,
}

impl Passage {
    pub fn make_id(doc_id: &str, position: usize) -> String {
        format!("{doc_id}#{position}")
    }

    /// A free-standing passage, mostly useful for fixtures.
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let id = id.into();
        let text = text.into();
        Self {
            doc_id: id.clone(),
            id,
            title: String::new(),
            word_count: count_words(&text),
            text,
            position: 0,
            hard_split: false,
        }
    }
}

pub fn count_words(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Lowercased tokens that end with a period but do not end a sentence.
const ABBREVIATIONS: &[&str] = &[
    "al.", "approx.", "ca.", "cf.", "co.", "dept.", "dr.", "e.g.", "eq.", "eqs.", "fig.", "figs.",
    "i.e.", "inc.", "jr.", "ltd.", "mr.", "mrs.", "ms.", "no.", "nos.", "prof.", "ref.", "refs.",
    "resp.", "sp.", "spp.", "sr.", "st.", "tab.", "univ.", "vol.", "vs.",
];

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

fn is_abbreviation(text: &str, period_at: usize) -> bool {
    let word_start = text[..period_at].rfind(char::is_whitespace).map_or(0, |i| {
        i + text[i..].chars().next().map_or(1, char::len_utf8)
    });
    let word = text[word_start..=period_at].trim_start_matches(['(', '[', '"', '\'']);
    let lower = word.to_lowercase();
    ABBREVIATIONS.binary_search(&lower.as_str()).is_ok()
}

/// Split `text` into sentences.
///
/// A boundary falls after a run of `.`, `!` or `?` (plus any closing quotes or
/// brackets) when the run is followed by whitespace and then an uppercase
/// letter or a digit. A `.` closing a known abbreviation is not a boundary.
/// Sentences exclude surrounding whitespace, so the gaps between them are
/// whitespace only.
pub fn segment_sentences(text: &str) -> Vec<Sentence<'_>> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut start: Option<usize> = None;
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if start.is_none() {
            if !c.is_whitespace() {
                start = Some(pos);
            }
            i += 1;
            continue;
        }
        if !is_terminator(c) {
            i += 1;
            continue;
        }
        let last_term = {
            let mut j = i;
            while j + 1 < chars.len() && is_terminator(chars[j + 1].1) {
                j += 1;
            }
            j
        };
        let mut j = last_term;
        while j + 1 < chars.len() && is_closer(chars[j + 1].1) {
            j += 1;
        }
        let end = chars[j].0 + chars[j].1.len_utf8();
        let mut k = j + 1;
        let had_space = k < chars.len() && chars[k].1.is_whitespace();
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let next_ok = had_space
            && k < chars.len()
            && (chars[k].1.is_uppercase() || chars[k].1.is_ascii_digit());
        let abbrev = chars[last_term].1 == '.'
            && last_term == i
            && is_abbreviation(text, chars[last_term].0);
        if next_ok && !abbrev {
            let s = start.take().unwrap_or(pos);
            out.push(Sentence {
                text: &text[s..end],
                start: s,
                end,
            });
            i = k;
        } else {
            i = j + 1;
        }
    }
    if let Some(s) = start {
        let trimmed = text[s..].trim_end();
        if !trimmed.is_empty() {
            let end = s + trimmed.len();
            out.push(Sentence {
                text: &text[s..end],
                start: s,
                end,
            });
        }
    }
    out
}

/// Unit of length for chunking. Spans are byte ranges into the input text.
pub trait Tokenizer: Sync {
    fn token_spans(&self, text: &str) -> Vec<Range<usize>>;

    fn count(&self, text: &str) -> usize {
        self.token_spans(text).len()
    }
}

/// Whitespace-delimited words. The default unit for both chunkers.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn token_spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut cur: Option<usize> = None;
        for (i, c) in text.char_indices() {
            match (c.is_whitespace(), cur) {
                (true, Some(s)) => {
                    spans.push(s..i);
                    cur = None;
                }
                (false, None) => cur = Some(i),
                _ => {}
            }
        }
        if let Some(s) = cur {
            spans.push(s..text.len());
        }
        spans
    }

    fn count(&self, text: &str) -> usize {
        count_words(text)
    }
}

/// Greedy sentence packing into passages of at most `max_words` words.
pub fn chunk_document(doc: &Document, max_words: usize) -> Result<Vec<Passage>> {
    pack_sentences(doc, max_words, &WhitespaceTokenizer)
}

/// Chunking for generator input, measured in units of `tokenizer`.
pub fn chunk_for_generation(
    doc: &Document,
    max_tokens: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<Passage>> {
    pack_sentences(doc, max_tokens, tokenizer)
}

fn pack_sentences(doc: &Document, limit: usize, tokenizer: &dyn Tokenizer) -> Result<Vec<Passage>> {
    if limit == 0 {
        return Err(Error::invalid("chunk limit must be at least 1"));
    }
    let text = doc.text.as_str();
    // (byte range, hard split)
    let mut spans: Vec<(Range<usize>, bool)> = Vec::new();
    let mut current: Option<(Range<usize>, usize)> = None;

    for s in segment_sentences(text) {
        let n = tokenizer.count(s.text);
        if n > limit {
            if let Some((r, _)) = current.take() {
                spans.push((r, false));
            }
            let toks = tokenizer.token_spans(s.text);
            let starts: Vec<usize> = toks.chunks(limit).map(|g| s.start + g[0].start).collect();
            for (gi, &piece_start) in starts.iter().enumerate() {
                let piece_end = match starts.get(gi + 1) {
                    Some(&next) => piece_start + text[piece_start..next].trim_end().len(),
                    None => s.end,
                };
                spans.push((piece_start..piece_end, true));
            }
            continue;
        }
        current = match current.take() {
            Some((r, count)) if count + n <= limit => Some((r.start..s.end, count + n)),
            Some((r, _)) => {
                spans.push((r, false));
                Some((s.start..s.end, n))
            }
            None => Some((s.start..s.end, n)),
        };
    }
    if let Some((r, _)) = current {
        spans.push((r, false));
    }

    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(position, (r, hard_split))| {
            let chunk = &text[r];
            Passage {
                id: Passage::make_id(&doc.id, position),
                doc_id: doc.id.clone(),
                title: doc.title.clone(),
                text: chunk.to_owned(),
                position,
                word_count: count_words(chunk),
                hard_split,
            }
        })
        .collect())
}

/// Load a line-delimited corpus of `{id, title, text}` records.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut docs = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::Malformed {
            path: path.to_owned(),
            line: idx + 1,
            message,
        };
        let doc: Document = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if doc.id.is_empty() {
            return Err(malformed("empty document id".into()));
        }
        if doc.text.is_empty() {
            return Err(malformed(format!("document {:?} has empty text", doc.id)));
        }
        if !seen.insert(doc.id.clone()) {
            return Err(Error::DuplicateId(doc.id));
        }
        docs.push(doc);
    }
    Ok(docs)
}

/// Passages addressable by id, in their original order.
#[derive(Debug, Clone, Default)]
pub struct PassageStore {
    passages: Vec<Passage>,
    by_id: HashMap<String, usize>,
}

impl PassageStore {
    pub fn new(passages: Vec<Passage>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(passages.len());
        for (i, p) in passages.iter().enumerate() {
            if by_id.insert(p.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(p.id.clone()));
            }
        }
        Ok(Self { passages, by_id })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(crate::jsonl::read(path)?)
    }

    pub fn get(&self, id: &str) -> Result<&Passage> {
        self.by_id
            .get(id)
            .map(|&i| &self.passages[i])
            .ok_or_else(|| Error::UnknownPassage(id.to_owned()))
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts(v: &[Sentence<'_>]) -> Vec<String> {
        v.iter().map(|s| s.text.to_owned()).collect()
    }

    fn words(n: usize, tag: &str) -> String {
        let mut s = (0..n)
            .map(|i| format!("{tag}{i}"))
            .collect::<Vec<_>>()
            .join(" ");
        s.push('.');
        // Capitalize so the next sentence boundary is recognized.
        let mut c = s.chars();
        let first = c.next().unwrap().to_uppercase().collect::<String>();
        first + c.as_str()
    }

    fn doc(text: &str) -> Document {
        Document {
            id: "d".into(),
            title: "T".into(),
            text: text.into(),
        }
    }

    #[test]
    fn abbreviation_list_is_sorted() {
        let mut sorted = ABBREVIATIONS.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, ABBREVIATIONS);
    }

    #[test]
    fn two_simple_sentences() {
        assert_eq!(texts(&segment_sentences("A b. C d.")), ["A b.", "C d."]);
    }

    #[test]
    fn empty_and_blank_text() {
        assert!(segment_sentences("").is_empty());
        assert!(segment_sentences(" \n\t ").is_empty());
    }

    #[test]
    fn abbreviation_does_not_split() {
        assert_eq!(
            texts(&segment_sentences("Dr. Smith ran. He won.")),
            ["Dr. Smith ran.", "He won."]
        );
        assert_eq!(
            texts(&segment_sentences(
                "Shown by Chen et al. In 2020 it spread. See Fig. 3 here."
            )),
            [
                "Shown by Chen et al. In 2020 it spread.",
                "See Fig. 3 here."
            ]
        );
    }

    #[test]
    fn lowercase_or_missing_space_does_not_split() {
        assert_eq!(segment_sentences("pH 7.4 was used. then more").len(), 1);
        assert_eq!(segment_sentences("Version 2.0 is out").len(), 1);
    }

    #[test]
    fn terminator_runs_and_closers() {
        assert_eq!(
            texts(&segment_sentences(
                "Really?! Yes. \"Quoted.\" Then (aside.) Done"
            )),
            ["Really?!", "Yes. \"Quoted.\"", "Then (aside.)", "Done"]
        );
        assert_eq!(
            texts(&segment_sentences("It rose 5%. 10 died.")),
            ["It rose 5%.", "10 died."]
        );
    }

    #[test]
    fn offsets_point_into_source() {
        let t = "  Héllo wörld. Ünïcode next!  ";
        let ss = segment_sentences(t);
        assert_eq!(ss.len(), 2);
        for s in &ss {
            assert_eq!(&t[s.start..s.end], s.text);
        }
    }

    #[test]
    fn greedy_packing_100_50_30() {
        let text = [words(100, "a"), words(50, "b"), words(30, "c")].join(" ");
        let ps = chunk_document(&doc(&text), 120).unwrap();
        let counts: Vec<usize> = ps.iter().map(|p| p.word_count).collect();
        assert_eq!(counts, [100, 80]);
        assert!(ps.iter().all(|p| !p.hard_split));
        assert_eq!(ps[1].id, "d#1");
        assert_eq!(ps[1].position, 1);
        assert_eq!(ps[0].title, "T");
    }

    #[test]
    fn short_document_is_one_chunk() {
        let ps = chunk_document(&doc(&words(10, "w")), 120).unwrap();
        assert_eq!(ps.len(), 1);
        assert_eq!(ps[0].word_count, 10);
        assert_eq!(ps[0].id, "d#0");
    }

    #[test]
    fn long_sentence_is_hard_split() {
        let ps = chunk_document(&doc(&words(150, "w")), 120).unwrap();
        let counts: Vec<usize> = ps.iter().map(|p| p.word_count).collect();
        assert_eq!(counts, [120, 30]);
        assert!(ps.iter().all(|p| p.hard_split));
    }

    #[test]
    fn long_sentence_flushes_pending_chunk() {
        let text = [words(20, "a"), words(130, "b"), words(5, "c")].join(" ");
        let ps = chunk_document(&doc(&text), 120).unwrap();
        let summary: Vec<(usize, bool)> = ps.iter().map(|p| (p.word_count, p.hard_split)).collect();
        assert_eq!(summary, [(20, false), (120, true), (10, true), (5, false)]);
    }

    #[test]
    fn generation_chunks() {
        let text = [words(150, "a"), words(150, "b")].join(" ");
        let ps = chunk_for_generation(
            &doc(&text),
            DEFAULT_GENERATION_MAX_TOKENS,
            &WhitespaceTokenizer,
        )
        .unwrap();
        assert_eq!(ps.len(), 2);
        let ps = chunk_for_generation(&doc("Short one."), 288, &WhitespaceTokenizer).unwrap();
        assert_eq!(ps.len(), 1);
        assert_eq!(DEFAULT_GENERATION_MAX_TOKENS, 288);
    }

    struct CharTokenizer;
    impl Tokenizer for CharTokenizer {
        fn token_spans(&self, text: &str) -> Vec<Range<usize>> {
            text.char_indices()
                .filter(|(_, c)| !c.is_whitespace())
                .map(|(i, c)| i..i + c.len_utf8())
                .collect()
        }
    }

    #[test]
    fn pluggable_tokenizer_changes_the_unit() {
        let d = doc("Ab cd. Ef gh.");
        let ps = chunk_for_generation(&d, 5, &CharTokenizer).unwrap();
        assert_eq!(
            ps.iter().map(|p| p.text.as_str()).collect::<Vec<_>>(),
            ["Ab cd.", "Ef gh."]
        );
        assert!(ps.iter().all(|p| !p.hard_split));
        let ps = chunk_for_generation(&d, 4, &CharTokenizer).unwrap();
        assert_eq!(
            ps.iter().map(|p| p.text.as_str()).collect::<Vec<_>>(),
            ["Ab cd", ".", "Ef gh", "."]
        );
        assert!(ps.iter().all(|p| p.hard_split));
    }

    #[test]
    fn zero_limit_rejected() {
        assert!(chunk_document(&doc("A."), 0).is_err());
    }

    #[test]
    fn load_corpus_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");

        std::fs::write(&p, "{\"id\":\"d1\",\"title\":\"\",\"text\":\"x\"}\n{\"id\":\"d2\",\"title\":\"t\",\"text\":\"y\"}\n").unwrap();
        let docs = load_corpus(&p).unwrap();
        assert_eq!(
            docs.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(),
            ["d1", "d2"]
        );

        std::fs::write(
            &p,
            "{\"id\":\"d1\",\"text\":\"x\"}\n{\"id\":\"d1\",\"text\":\"y\"}\n",
        )
        .unwrap();
        assert!(matches!(load_corpus(&p), Err(Error::DuplicateId(id)) if id == "d1"));

        std::fs::write(&p, "{\"id\":\"d1\",\"text\":\"x\"}\nnot json\n").unwrap();
        assert!(matches!(
            load_corpus(&p),
            Err(Error::Malformed { line: 2, .. })
        ));

        std::fs::write(&p, "").unwrap();
        assert!(load_corpus(&p).unwrap().is_empty());
    }

    fn sentence_like() -> impl Strategy<Value = String> {
        let word = prop_oneof![
            "[a-z]{1,6}",
            "[A-Z][a-z]{0,5}",
            "[0-9]{1,3}",
            Just("Dr.".to_owned()),
            Just("et al.".to_owned()),
            Just("é".to_owned()),
        ];
        let sentence = (
            proptest::collection::vec(word, 1..8),
            prop_oneof![Just("."), Just("!"), Just("?"), Just("")],
        )
            .prop_map(|(ws, end)| format!("{}{}", ws.join(" "), end));
        let gap = prop_oneof![Just(" "), Just("  "), Just("\n"), Just(" \t ")];
        proptest::collection::vec((sentence, gap), 0..8)
            .prop_map(|parts| parts.into_iter().map(|(s, g)| format!("{s}{g}")).collect())
    }

    proptest! {
        #[test]
        fn sentences_reconstruct_source(text in sentence_like()) {
            let ss = segment_sentences(&text);
            let mut rebuilt = String::new();
            let mut cursor = 0;
            for s in &ss {
                prop_assert!(s.start < s.end && s.end <= text.len());
                prop_assert!(s.start >= cursor);
                let gap = &text[cursor..s.start];
                prop_assert!(gap.chars().all(char::is_whitespace));
                rebuilt.push_str(gap);
                rebuilt.push_str(s.text);
                cursor = s.end;
            }
            prop_assert!(text[cursor..].chars().all(char::is_whitespace));
            rebuilt.push_str(&text[cursor..]);
            prop_assert_eq!(rebuilt, text.clone());
            prop_assert_eq!(segment_sentences(&text), ss);
        }

        #[test]
        fn chunks_cover_sentences_and_respect_bound(text in sentence_like(), max in 1usize..12) {
            prop_assume!(!text.trim().is_empty());
            let d = doc(&text);
            let ps = chunk_document(&d, max).unwrap();
            let squash = |s: &str| s.split_whitespace().collect::<String>();
            let expected: String = segment_sentences(&text).iter().map(|s| squash(s.text)).collect();
            let got: String = ps.iter().map(|p| squash(&p.text)).collect();
            prop_assert_eq!(got, expected);
            for (i, p) in ps.iter().enumerate() {
                prop_assert_eq!(p.position, i);
                prop_assert_eq!(p.word_count, count_words(&p.text));
                prop_assert!(p.hard_split || p.word_count <= max);
                if p.hard_split { prop_assert!(p.word_count <= max); }
            }
            prop_assert_eq!(chunk_document(&d, max).unwrap(), ps);
        }
    }
}

//! Text analysis shared by indexing, querying, hashing and the lexical reader.
//!
//! The pipeline is tokenize (maximal runs of alphanumeric characters),
//! optionally lowercase, then drop stop words. The same [`Analyzer`] value
//! must be used at index time and query time; the sparse index persists its
//! [`AnalyzerConfig`] so a reloaded index analyzes queries identically.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Named stop-word lists. Persisted by id, never by content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopWords {
    #[default]
    None,
    English,
}

const ENGLISH_STOP_WORDS: &[&str] = &[
    "a", "about", "an", "and", "are", "as", "at", "be", "been", "but", "by", "can", "did", "do",
    "does", "for", "from", "had", "has", "have", "how", "if", "in", "into", "is", "it", "its",
    "of", "on", "or", "such", "than", "that", "the", "their", "then", "there", "these", "they",
    "this", "to", "was", "were", "what", "when", "where", "which", "who", "why", "will", "with",
];

impl StopWords {
    pub fn id(self) -> u8 {
        match self {
            StopWords::None => 0,
            StopWords::English => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(StopWords::None),
            1 => Some(StopWords::English),
            _ => None,
        }
    }

    pub fn contains(self, token: &str) -> bool {
        match self {
            StopWords::None => false,
            // The list is sorted, so binary search is valid.
            StopWords::English => ENGLISH_STOP_WORDS.binary_search(&token).is_ok(),
        }
    }
}

impl fmt::Display for StopWords {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopWords::None => "none",
            StopWords::English => "english",
        })
    }
}

impl FromStr for StopWords {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(StopWords::None),
            "english" => Ok(StopWords::English),
            other => Err(Error::invalid(format!("unknown stop-word list {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnalyzerConfig {
    pub lowercase: bool,
    pub stop_words: StopWords,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            stop_words: StopWords::None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Analyzer {
    config: AnalyzerConfig,
}

impl Analyzer {
    pub fn new(config: AnalyzerConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> AnalyzerConfig {
        self.config
    }

    /// Analyze `text` into its token sequence, preserving order and repeats.
    pub fn analyze(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        self.for_each_token(text, |t| out.push(t.to_owned()));
        out
    }

    /// Visit tokens without collecting them. The callback sees the analyzed form.
    pub fn for_each_token(&self, text: &str, mut f: impl FnMut(&str)) {
        let mut buf = String::new();
        for raw in text.split(|c: char| !c.is_alphanumeric()) {
            if raw.is_empty() {
                continue;
            }
            let token: &str = if self.config.lowercase && raw.chars().any(char::is_uppercase) {
                buf.clear();
                buf.extend(raw.chars().flat_map(char::to_lowercase));
                &buf
            } else {
                raw
            };
            if !self.config.stop_words.contains(token) {
                f(token);
            }
        }
    }
}

//! Run configuration file. Precedence is flags, then this file, then defaults.

use std::path::Path;

use anyhow::Context;
use orqa_core::pipeline::RetrieverMode;
use serde::{Deserialize, Serialize};

use crate::usage;

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "is_default")]
    pub chunking: Chunking,
    #[serde(skip_serializing_if = "is_default")]
    pub bm25: Bm25,
    #[serde(skip_serializing_if = "is_default")]
    pub fusion: Fusion,
    #[serde(skip_serializing_if = "is_default")]
    pub orqa: Orqa,
    #[serde(skip_serializing_if = "is_default")]
    pub filter: Filter,
    #[serde(skip_serializing_if = "is_default")]
    pub generation: Generation,
    #[serde(skip_serializing_if = "is_default")]
    pub providers: Providers,
    #[serde(skip_serializing_if = "is_default")]
    pub eval: Eval,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Chunking {
    pub max_words: Option<usize>,
    pub generation_tokens: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25 {
    pub k1: Option<f64>,
    pub b: Option<f64>,
    pub stopwords: Option<String>,
    pub lowercase: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fusion {
    pub sparse_weight: Option<f64>,
    pub candidate_depth: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Orqa {
    pub mode: Option<RetrieverMode>,
    pub k: Option<usize>,
    pub ir_weight: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Filter {
    pub threshold: Option<f64>,
    pub strict: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Generation {
    pub n: Option<usize>,
    pub top_k: Option<usize>,
    pub top_p: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Providers {
    pub embedder: Option<String>,
    pub reader: Option<String>,
    pub generator: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Eval {
    pub ks: Option<Vec<usize>>,
    pub ns: Option<Vec<usize>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections() {
        let c: FileConfig = toml::from_str(
            "seed = 3\n[orqa]\nmode = \"hybrid\"\nk = 40\nir_weight = 0.7\n[providers]\nreader = \"lexical\"\n",
        )
        .unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.orqa.mode, Some(RetrieverMode::Hybrid));
        assert_eq!(c.orqa.k, Some(40));
        assert_eq!(c.providers.reader.as_deref(), Some("lexical"));
        assert!(toml::from_str::<FileConfig>("[orqa]\nkk = 1\n").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = FileConfig::default();
        c.orqa.k = Some(10);
        c.orqa.ir_weight = Some(0.4);
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<FileConfig>(&text).unwrap(), c);
    }
}

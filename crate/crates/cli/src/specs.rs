//! Provider strings (`hash:256`, `lexical`, `mock:7`, `cmd:<command>`)
//! and index loading by file header.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::Context;
use orqa_core::dense::{DenseIndex, EmbeddingProvider, HashEmbedder, HASH_SEED};
use orqa_core::provider::{SubprocessEmbedder, SubprocessGenerator, SubprocessReader};
use orqa_core::reader::{LexicalReader, ReaderProvider};
use orqa_core::sparse::SparseIndex;
use orqa_core::synthgen::{GeneratorProvider, MockGenerator};

use crate::usage;

pub const DEFAULT_EMBEDDER: &str = "hash:256";
pub const DEFAULT_READER: &str = "lexical";
pub const DEFAULT_GENERATOR: &str = "mock";

fn command_of(spec: &str) -> Option<&str> {
    spec.strip_prefix("cmd:").map(str::trim)
}

pub fn embedder(spec: &str) -> anyhow::Result<Box<dyn EmbeddingProvider>> {
    if let Some(cmd) = command_of(spec) {
        return Ok(Box::new(SubprocessEmbedder::spawn(cmd)?));
    }
    let Some(rest) = spec.strip_prefix("hash:") else {
        return Err(usage(format!(
            "unknown embedder {spec:?}; expected hash:<dim> or cmd:<command>"
        )));
    };
    let (dim, title) = match rest.split_once(':') {
        Some((d, "title")) => (d, true),
        Some(_) => {
            return Err(usage(format!(
                "bad embedder {spec:?}; expected hash:<dim>[:title]"
            )))
        }
        None => (rest, false),
    };
    let dim: usize = dim
        .parse()
        .ok()
        .filter(|&d| d > 0)
        .ok_or_else(|| usage(format!("bad embedding dimension in {spec:?}")))?;
    Ok(Box::new(HashEmbedder::new(dim).with_title(title)))
}

/// The hash embedder spec that produced `fingerprint`, if it is one.
pub fn spec_from_fingerprint(fingerprint: &str) -> Option<String> {
    let rest = fingerprint.strip_prefix("hash-embed/v1/")?;
    let mut dim = None;
    let mut title = None;
    let mut seed_ok = false;
    for part in rest.split('/') {
        match part.split_once('=')? {
            ("dim", d) => dim = d.parse::<usize>().ok(),
            ("title", t) => title = t.parse::<bool>().ok(),
            ("seed", s) => seed_ok = s == format!("{HASH_SEED:#x}"),
            _ => return None,
        }
    }
    let dim = dim?;
    match (seed_ok, title?) {
        (true, false) => Some(format!("hash:{dim}")),
        (true, true) => Some(format!("hash:{dim}:title")),
        (false, _) => None,
    }
}

pub fn reader(spec: &str) -> anyhow::Result<Box<dyn ReaderProvider>> {
    if let Some(cmd) = command_of(spec) {
        return Ok(Box::new(SubprocessReader::spawn(cmd)?));
    }
    match spec {
        "lexical" => Ok(Box::new(LexicalReader::default())),
        other => Err(usage(format!(
            "unknown reader {other:?}; expected lexical or cmd:<command>"
        ))),
    }
}

pub fn generator(spec: &str, default_seed: u64) -> anyhow::Result<Box<dyn GeneratorProvider>> {
    if let Some(cmd) = command_of(spec) {
        return Ok(Box::new(SubprocessGenerator::spawn(cmd)?));
    }
    match spec.split_once(':') {
        None if spec == "mock" => Ok(Box::new(MockGenerator::new(default_seed))),
        Some(("mock", seed)) => {
            let seed = seed
                .parse()
                .map_err(|_| usage(format!("bad mock generator seed in {spec:?}")))?;
            Ok(Box::new(MockGenerator::new(seed)))
        }
        _ => Err(usage(format!(
            "unknown generator {spec:?}; expected mock[:<seed>] or cmd:<command>"
        ))),
    }
}

pub enum LoadedIndex {
    Sparse(SparseIndex),
    Dense(DenseIndex),
}

pub fn load_index(path: &Path) -> anyhow::Result<LoadedIndex> {
    let mut magic = [0u8; 4];
    File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .with_context(|| format!("reading index header of {}", path.display()))?;
    match &magic {
        m if m == orqa_core::sparse::MAGIC => Ok(LoadedIndex::Sparse(SparseIndex::load(path)?)),
        m if m == orqa_core::dense::MAGIC => Ok(LoadedIndex::Dense(DenseIndex::load(path)?)),
        _ => anyhow::bail!("{} is not a sparse or dense index", path.display()),
    }
}

/// At most one index of each kind.
pub struct Indices {
    pub sparse: Option<(PathBuf, SparseIndex)>,
    pub dense: Option<(PathBuf, DenseIndex)>,
}

pub fn load_indices(paths: &[PathBuf]) -> anyhow::Result<Indices> {
    let mut out = Indices {
        sparse: None,
        dense: None,
    };
    for p in paths {
        match load_index(p)? {
            LoadedIndex::Sparse(s) if out.sparse.is_none() => out.sparse = Some((p.clone(), s)),
            LoadedIndex::Dense(d) if out.dense.is_none() => out.dense = Some((p.clone(), d)),
            _ => return Err(usage("give at most one sparse and one dense index")),
        }
    }
    Ok(out)
}

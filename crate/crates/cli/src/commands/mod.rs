//! Subcommand implementations. Each returns a manifest recorder.

mod data;
mod evaluate;
mod retrieval;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use orqa_core::jsonl;
use serde::Serialize;
use serde_json::Value;

use crate::cli::{Cli, Command};
use crate::config::FileConfig;
use crate::manifest::{self, Recorder};
use crate::usage;

pub struct Ctx {
    pub file: FileConfig,
    config_path: Option<PathBuf>,
    manifest: Option<PathBuf>,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let ctx = Ctx {
        file,
        config_path: cli.config,
        manifest: cli.manifest,
    };
    let recorder = match cli.command {
        Command::Ingest(a) => data::ingest(&ctx, a)?,
        Command::IndexSparse(a) => data::index_sparse(&ctx, a)?,
        Command::IndexDense(a) => data::index_dense(&ctx, a)?,
        Command::GenerateSynthetic(a) => data::generate(&ctx, a)?,
        Command::FilterRoundtrip(a) => data::filter(&ctx, a)?,
        Command::Search(a) => retrieval::search(&ctx, a)?,
        Command::RunOrqa(a) => retrieval::run_orqa(&ctx, a)?,
        Command::Tune(a) => retrieval::tune(&ctx, a)?,
        Command::Overlap(a) => retrieval::overlap(&ctx, a)?,
        Command::Evaluate(a) => evaluate::evaluate(&ctx, a)?,
        Command::ServeProvider(a) => return data::serve(a),
    };
    ctx.write_manifest(recorder)
}

impl Ctx {
    fn write_manifest(&self, mut recorder: Recorder) -> anyhow::Result<()> {
        if let Some(p) = &self.config_path {
            recorder.input(p);
        }
        let path = match (&self.manifest, recorder.primary_output()) {
            (Some(p), _) => p.clone(),
            (None, Some(out)) => manifest::default_path(out),
            (None, None) => return Ok(()),
        };
        let m = recorder.finish()?;
        let mut text = serde_json::to_string_pretty(&m).expect("manifests serialize");
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing manifest {}", path.display()))
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    items: impl IntoIterator<Item = &'a T>,
) -> anyhow::Result<()> {
    jsonl::write(path, items)?;
    Ok(())
}

fn finish(mut w: impl Write, path: &Path) -> anyhow::Result<()> {
    w.flush()
        .with_context(|| format!("writing {}", path.display()))
}

/// Require `value` to satisfy `ok`, else a usage error naming `what`.
fn check<T: std::fmt::Display + Copy>(
    what: &str,
    value: T,
    ok: impl Fn(T) -> bool,
    range: &str,
) -> anyhow::Result<T> {
    if ok(value) {
        Ok(value)
    } else {
        Err(usage(format!("{what} must be {range}, got {value}")))
    }
}

fn check_weight(what: &str, w: f64) -> anyhow::Result<f64> {
    check(what, w, |w| (0.0..=1.0).contains(&w), "in [0, 1]")
}

fn check_positive(what: &str, n: usize) -> anyhow::Result<usize> {
    check(what, n, |n| n >= 1, "at least 1")
}

/// `(id, text)` pairs from JSON lines that carry a query or question.
pub fn load_queries(path: &Path) -> anyhow::Result<Vec<(String, String)>> {
    let values: Vec<Value> = jsonl::read(path)?;
    let mut ids = HashSet::new();
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let id = ["query_id", "question_id", "id"]
                .iter()
                .find_map(|k| match v.get(*k)? {
                    Value::String(s) => Some(s.clone()),
                    Value::Number(n) => Some(n.to_string()),
                    _ => None,
                })
                .unwrap_or_else(|| format!("q{i}"));
            let text = ["query", "question", "text"]
                .iter()
                .find_map(|k| v.get(*k)?.as_str())
                .with_context(|| {
                    format!("{}: record {} has no query text", path.display(), i + 1)
                })?;
            anyhow::ensure!(
                ids.insert(id.clone()),
                "{}: duplicate query id {id:?}",
                path.display()
            );
            Ok((id, text.to_owned()))
        })
        .collect()
}

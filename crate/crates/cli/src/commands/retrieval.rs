use std::collections::HashMap;
use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::Context;
use orqa_core::corpus::PassageStore;
use orqa_core::dense::EmbeddingProvider;
use orqa_core::eval::dataset::load_open;
use orqa_core::fusion::{overlap_at_k, read_run, write_run, FusionConfig, Ranking, RunFormat};
use orqa_core::jsonl;
use orqa_core::pipeline::{
    self, DenseRetriever, HybridRetriever, Objective, Orqa, OrqaConfig, Retriever, RetrieverMode,
    SparseRetriever,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_positive, check_weight, create, finish, load_queries, write_jsonl, Ctx};
use crate::cli::{
    ModeArg, OverlapArgs, RetrievalArgs, RunFormatArg, RunOrqaArgs, SearchArgs, TuneArgs,
};
use crate::config::{self, FileConfig};
use crate::manifest::Recorder;
use crate::specs::{self, Indices, DEFAULT_READER};
use crate::usage;

/// Loaded indices plus everything needed to query them.
struct Setup {
    indices: Indices,
    embedder: Option<Box<dyn EmbeddingProvider>>,
    settings: RetrievalSettings,
}

#[derive(Debug, Clone, Serialize)]
struct RetrievalSettings {
    mode: RetrieverMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    embedder: Option<String>,
    fusion: FusionConfig,
}

impl Setup {
    fn load(ctx: &Ctx, a: &RetrievalArgs) -> anyhow::Result<Self> {
        let indices = specs::load_indices(&a.index)?;
        let mode = match a.mode {
            Some(ModeArg::Sparse) => RetrieverMode::Sparse,
            Some(ModeArg::Dense) => RetrieverMode::Dense,
            Some(ModeArg::Hybrid) => RetrieverMode::Hybrid,
            None => match (ctx.file.orqa.mode, &indices.sparse, &indices.dense) {
                (Some(m), _, _) => m,
                (None, Some(_), Some(_)) => RetrieverMode::Hybrid,
                (None, None, Some(_)) => RetrieverMode::Dense,
                (None, _, None) => RetrieverMode::Sparse,
            },
        };
        let needs_sparse = matches!(mode, RetrieverMode::Sparse | RetrieverMode::Hybrid);
        let needs_dense = matches!(mode, RetrieverMode::Dense | RetrieverMode::Hybrid);
        if needs_sparse && indices.sparse.is_none() {
            return Err(usage(format!("{mode} retrieval needs a sparse --index")));
        }
        if needs_dense && indices.dense.is_none() {
            return Err(usage(format!("{mode} retrieval needs a dense --index")));
        }

        let f = &ctx.file.fusion;
        let defaults = FusionConfig::default();
        let fusion = FusionConfig {
            sparse_weight: check_weight(
                "sparse weight",
                a.sparse_weight
                    .or(f.sparse_weight)
                    .unwrap_or(defaults.sparse_weight),
            )?,
            candidate_depth: check_positive(
                "candidate depth",
                a.candidate_depth
                    .or(f.candidate_depth)
                    .unwrap_or(defaults.candidate_depth),
            )?,
        };

        let (embedder, spec) = match &indices.dense {
            Some((path, dense)) if needs_dense => {
                let spec = a
                    .embedder
                    .clone()
                    .or_else(|| ctx.file.providers.embedder.clone())
                    .or_else(|| specs::spec_from_fingerprint(dense.fingerprint()))
                    .ok_or_else(|| {
                        usage(format!(
                            "{} was built with {:?}; pass --embedder for its query encoder",
                            path.display(),
                            dense.fingerprint()
                        ))
                    })?;
                (Some(specs::embedder(&spec)?), Some(spec))
            }
            _ => (None, None),
        };
        Ok(Self {
            indices,
            embedder,
            settings: RetrievalSettings {
                mode,
                embedder: spec,
                fusion,
            },
        })
    }

    fn retriever(&self) -> Box<dyn Retriever + '_> {
        let sparse = self.indices.sparse.as_ref().map(|(_, s)| s);
        let dense = self.indices.dense.as_ref().map(|(_, d)| d);
        let embedder = self.embedder.as_deref();
        match self.settings.mode {
            RetrieverMode::Sparse => Box::new(SparseRetriever {
                index: sparse.expect("checked at load"),
            }),
            RetrieverMode::Dense => Box::new(DenseRetriever {
                index: dense.expect("checked at load"),
                provider: embedder.expect("checked at load"),
            }),
            RetrieverMode::Hybrid => Box::new(HybridRetriever {
                sparse: sparse.expect("checked at load"),
                dense: dense.expect("checked at load"),
                provider: embedder.expect("checked at load"),
                fusion: self.settings.fusion,
            }),
        }
    }

    fn index_paths(&self) -> Vec<PathBuf> {
        let mut v = Vec::new();
        if let Some((p, _)) = &self.indices.sparse {
            v.push(p.clone());
        }
        if let Some((p, _)) = &self.indices.dense {
            v.push(p.clone());
        }
        v
    }

    fn orqa_config(
        &self,
        file: &FileConfig,
        k: Option<usize>,
        ir_weight: Option<f64>,
    ) -> anyhow::Result<OrqaConfig> {
        let mode = self.settings.mode;
        Ok(OrqaConfig {
            k: check_positive("K", k.or(file.orqa.k).unwrap_or(mode.default_k()))?,
            ir_weight: check_weight(
                "IR weight",
                ir_weight
                    .or(file.orqa.ir_weight)
                    .unwrap_or(pipeline::DEFAULT_IR_WEIGHT),
            )?,
            mode,
            fusion: self.settings.fusion,
        })
    }
}

#[derive(Serialize)]
struct SearchSettings {
    #[serde(flatten)]
    retrieval: RetrievalSettings,
    k: usize,
}

const DEFAULT_SEARCH_K: usize = 100;

pub fn search(ctx: &Ctx, a: SearchArgs) -> anyhow::Result<Recorder> {
    let setup = Setup::load(ctx, &a.retrieval)?;
    let k = check_positive("k", a.k.unwrap_or(DEFAULT_SEARCH_K))?;
    let queries = match (&a.queries, &a.query) {
        (Some(p), _) => load_queries(p)?,
        (None, Some(q)) => vec![("q0".to_owned(), q.clone())],
        (None, None) => return Err(usage("give --queries or --query")),
    };
    let retriever = setup.retriever();
    let rankings: Vec<Ranking> = queries
        .par_iter()
        .map(|(_, q)| retriever.retrieve(q, k))
        .collect::<orqa_core::Result<_>>()?;

    let format = match a.format {
        RunFormatArg::Jsonl => RunFormat::Jsonl,
        RunFormatArg::Trec => RunFormat::Trec,
    };
    let write_all = |w: &mut dyn Write| -> io::Result<()> {
        let mut w = w;
        for ((id, _), r) in queries.iter().zip(&rankings) {
            write_run(&mut w, id, r, format, &a.tag)?;
        }
        Ok(())
    };
    match &a.out {
        Some(p) => {
            let mut w = create(p)?;
            write_all(&mut w).with_context(|| format!("writing {}", p.display()))?;
            finish(w, p)?;
        }
        None => {
            let mut out = io::stdout().lock();
            write_all(&mut out).context("writing to stdout")?;
        }
    }

    let mut r = Recorder::new(
        "search",
        SearchSettings {
            retrieval: setup.settings.clone(),
            k,
        },
    );
    for p in setup.index_paths() {
        r.input(&p);
    }
    if let Some(p) = &a.queries {
        r.input(p);
    }
    if let Some(p) = &a.out {
        r.output(p);
    }
    Ok(r)
}

/// One line of an answer file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub question_id: String,
    pub rank: usize,
    pub answer: String,
    pub passage_id: String,
    pub combined: f64,
    pub ir_score: f64,
    pub mrc_score: f64,
}

#[derive(Serialize)]
struct OrqaSettings {
    #[serde(flatten)]
    config: OrqaConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    embedder: Option<String>,
    reader: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    top: Option<usize>,
}

fn reader_spec(ctx: &Ctx, flag: &Option<String>) -> String {
    flag.clone()
        .or_else(|| ctx.file.providers.reader.clone())
        .unwrap_or_else(|| DEFAULT_READER.to_owned())
}

pub fn run_orqa(ctx: &Ctx, a: RunOrqaArgs) -> anyhow::Result<Recorder> {
    let setup = Setup::load(ctx, &a.retrieval)?;
    let config = setup.orqa_config(&ctx.file, a.k, a.ir_weight)?;
    let top = a.top.map(|t| check_positive("top", t)).transpose()?;
    let spec = reader_spec(ctx, &a.reader);
    let reader = specs::reader(&spec)?;
    let store = PassageStore::load(&a.passages)?;
    let questions = load_queries(&a.questions)?;

    let retriever = setup.retriever();
    let system = Orqa {
        retriever: retriever.as_ref(),
        reader: reader.as_ref(),
        store: &store,
    };
    let answers = questions
        .par_iter()
        .map(|(_, q)| system.answer(q, &config))
        .collect::<orqa_core::Result<Vec<_>>>()?;

    let records: Vec<AnswerRecord> = questions
        .iter()
        .zip(&answers)
        .flat_map(|((id, _), list)| {
            list.iter()
                .take(top.unwrap_or(usize::MAX))
                .enumerate()
                .map(move |(i, a)| AnswerRecord {
                    question_id: id.clone(),
                    rank: i + 1,
                    answer: a.candidate.text.clone(),
                    passage_id: a.candidate.passage_id.clone(),
                    combined: a.combined,
                    ir_score: a.ir_score,
                    mrc_score: a.mrc_score,
                })
        })
        .collect();
    write_jsonl(&a.out, &records)?;
    eprintln!("answered {} questions", questions.len());

    let mut r = Recorder::new(
        "run-orqa",
        OrqaSettings {
            config,
            embedder: setup.settings.embedder.clone(),
            reader: spec,
            top,
        },
    );
    for p in setup.index_paths() {
        r.input(&p);
    }
    r.input(&a.questions);
    r.input(&a.passages);
    r.output(&a.out);
    Ok(r)
}

#[derive(Serialize)]
struct TuneSettings {
    #[serde(flatten)]
    retrieval: RetrievalSettings,
    reader: String,
    weights: Vec<f64>,
    ks: Vec<usize>,
    objective: Objective,
}

pub fn tune(ctx: &Ctx, a: TuneArgs) -> anyhow::Result<Recorder> {
    let setup = Setup::load(ctx, &a.retrieval)?;
    let base = setup.orqa_config(&ctx.file, None, None)?;
    for &w in &a.weights {
        check_weight("grid weight", w)?;
    }
    for &k in &a.ks {
        check_positive("grid K", k)?;
    }
    let objective = Objective::TopNF1(check_positive("top-n", a.top_n)?);
    let spec = reader_spec(ctx, &a.reader);
    let reader = specs::reader(&spec)?;
    let store = PassageStore::load(&a.passages)?;
    let dev = load_open(&a.questions)?;

    let retriever = setup.retriever();
    let system = Orqa {
        retriever: retriever.as_ref(),
        reader: reader.as_ref(),
        store: &store,
    };
    let outcome = pipeline::tune(&dev, &system, &base, &a.weights, &a.ks, objective)?;

    let best = FileConfig {
        orqa: config::Orqa {
            mode: Some(outcome.best.mode),
            k: Some(outcome.best.k),
            ir_weight: Some(outcome.best.ir_weight),
        },
        fusion: config::Fusion {
            sparse_weight: Some(outcome.best.fusion.sparse_weight),
            candidate_depth: Some(outcome.best.fusion.candidate_depth),
        },
        providers: config::Providers {
            embedder: setup.settings.embedder.clone(),
            reader: Some(spec.clone()),
            generator: None,
        },
        ..FileConfig::default()
    };
    let text = toml::to_string(&best).context("encoding the tuned configuration")?;
    std::fs::write(&a.out, text).with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!(
        "best K={} ir_weight={} with objective {:.4}",
        outcome.best.k,
        outcome.best.ir_weight,
        outcome
            .grid
            .iter()
            .map(|g| g.objective)
            .fold(f64::NEG_INFINITY, f64::max)
    );

    let mut r = Recorder::new(
        "tune",
        TuneSettings {
            retrieval: setup.settings.clone(),
            reader: spec,
            weights: a.weights.clone(),
            ks: a.ks.clone(),
            objective,
        },
    );
    for p in setup.index_paths() {
        r.input(&p);
    }
    r.input(&a.questions);
    r.input(&a.passages);
    r.output(&a.out);
    if let Some(p) = &a.grid {
        write_jsonl(p, &outcome.grid)?;
        r.output(p);
    }
    Ok(r)
}

#[derive(Serialize)]
struct OverlapRecord<'a> {
    query_id: &'a str,
    overlap: usize,
}

pub fn overlap(_ctx: &Ctx, a: OverlapArgs) -> anyhow::Result<Recorder> {
    let k = check_positive("k", a.k)?;
    let run_a = read_run(&a.run_a)?;
    let run_b: HashMap<String, Ranking> = read_run(&a.run_b)?.into_iter().collect();
    let empty = Ranking::default();
    let rows: Vec<OverlapRecord> = run_a
        .iter()
        .map(|(q, r)| OverlapRecord {
            query_id: q,
            overlap: overlap_at_k(r, run_b.get(q).unwrap_or(&empty), k),
        })
        .collect();
    let mean = if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(|r| r.overlap as f64).sum::<f64>() / rows.len() as f64
    };
    println!("mean overlap@{k}: {mean:.4} over {} queries", rows.len());

    #[derive(Serialize)]
    struct Settings {
        k: usize,
    }
    let mut r = Recorder::new("overlap", Settings { k });
    r.input(&a.run_a);
    r.input(&a.run_b);
    if let Some(p) = &a.out {
        jsonl::write(p, &rows)?;
        r.output(p);
    }
    Ok(r)
}

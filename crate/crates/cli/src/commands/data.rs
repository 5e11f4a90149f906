use std::collections::HashMap;
use std::io::{self, BufWriter};

use orqa_core::analysis::{AnalyzerConfig, StopWords};
use orqa_core::corpus::{
    chunk_document, chunk_for_generation, load_corpus, Passage, PassageStore, WhitespaceTokenizer,
    DEFAULT_GENERATION_MAX_TOKENS, DEFAULT_MAX_WORDS,
};
use orqa_core::dense::{check_provider, DenseIndex, HashEmbedder, VectorsFile};
use orqa_core::eval::dataset::squad_documents;
use orqa_core::jsonl;
use orqa_core::provider::{serve_embedder, serve_generator, serve_reader};
use orqa_core::reader::{
    roundtrip_filter, DropReason, FilterMode, LexicalReader, DEFAULT_ROUNDTRIP_THRESHOLD,
};
use orqa_core::sparse::{Bm25Params, SparseIndex};
use orqa_core::synthgen::{
    generate_examples, sample_ict_pair, GenerationParams, MockGenerator, MrcRecord,
    SyntheticExample,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{check, check_positive, write_jsonl, Ctx};
use crate::cli::{
    FilterArgs, GenerateArgs, IndexDenseArgs, IndexSparseArgs, IngestArgs, ServeArgs,
    ServedProvider, StopWordsArg,
};
use crate::manifest::Recorder;
use crate::specs::{self, DEFAULT_EMBEDDER, DEFAULT_GENERATOR, DEFAULT_READER};
use crate::usage;

#[derive(Serialize)]
struct IngestSettings {
    chunker: &'static str,
    limit: usize,
}

pub fn ingest(ctx: &Ctx, a: IngestArgs) -> anyhow::Result<Recorder> {
    let c = &ctx.file.chunking;
    let settings = if a.for_generation {
        IngestSettings {
            chunker: "generation",
            limit: check_positive(
                "generation token limit",
                a.generation_tokens
                    .or(c.generation_tokens)
                    .unwrap_or(DEFAULT_GENERATION_MAX_TOKENS),
            )?,
        }
    } else {
        IngestSettings {
            chunker: "retrieval",
            limit: check_positive(
                "max words",
                a.max_words.or(c.max_words).unwrap_or(DEFAULT_MAX_WORDS),
            )?,
        }
    };
    let docs = if a.corpus.extension().is_some_and(|e| e == "json") {
        squad_documents(&a.corpus)?
    } else {
        load_corpus(&a.corpus)?
    };
    let chunks: Vec<Vec<Passage>> = docs
        .par_iter()
        .map(|d| {
            if a.for_generation {
                chunk_for_generation(d, settings.limit, &WhitespaceTokenizer)
            } else {
                chunk_document(d, settings.limit)
            }
        })
        .collect::<orqa_core::Result<_>>()?;
    let passages: Vec<Passage> = chunks.into_iter().flatten().collect();
    write_jsonl(&a.out, &passages)?;
    eprintln!(
        "ingested {} documents into {} passages ({} hard splits)",
        docs.len(),
        passages.len(),
        passages.iter().filter(|p| p.hard_split).count()
    );
    let mut r = Recorder::new("ingest", &settings);
    r.input(&a.corpus);
    r.output(&a.out);
    Ok(r)
}

fn load_passages(path: &std::path::Path) -> anyhow::Result<Vec<Passage>> {
    Ok(jsonl::read(path)?)
}

#[derive(Serialize)]
struct SparseSettings {
    k1: f64,
    b: f64,
    lowercase: bool,
    stopwords: String,
}

pub fn index_sparse(ctx: &Ctx, a: IndexSparseArgs) -> anyhow::Result<Recorder> {
    let f = &ctx.file.bm25;
    let defaults = Bm25Params::default();
    let params = Bm25Params {
        k1: a.k1.or(f.k1).unwrap_or(defaults.k1),
        b: a.b.or(f.b).unwrap_or(defaults.b),
    };
    params.validate().map_err(|e| usage(e.to_string()))?;
    let stop_words = match a.stopwords {
        Some(StopWordsArg::None) => StopWords::None,
        Some(StopWordsArg::English) => StopWords::English,
        None => match &f.stopwords {
            Some(s) => s
                .parse()
                .map_err(|e: orqa_core::Error| usage(e.to_string()))?,
            None => StopWords::default(),
        },
    };
    let lowercase = !a.no_lowercase && f.lowercase.unwrap_or(true);
    let analyzer = AnalyzerConfig {
        lowercase,
        stop_words,
    };

    let passages = load_passages(&a.passages)?;
    let index = SparseIndex::build(&passages, params, analyzer)?;
    index.save(&a.out)?;
    eprintln!(
        "indexed {} passages, {} terms",
        index.len(),
        index.num_terms()
    );

    let mut r = Recorder::new(
        "index-sparse",
        SparseSettings {
            k1: params.k1,
            b: params.b,
            lowercase,
            stopwords: stop_words.to_string(),
        },
    );
    r.input(&a.passages);
    r.output(&a.out);
    Ok(r)
}

#[derive(Serialize)]
struct DenseSettings {
    embedder: Option<String>,
    fingerprint: String,
    dim: usize,
}

pub fn index_dense(ctx: &Ctx, a: IndexDenseArgs) -> anyhow::Result<Recorder> {
    let passages = load_passages(&a.passages)?;
    let mut inputs = vec![a.passages.clone()];
    let (index, spec) = match &a.vectors {
        Some(v) => {
            inputs.push(v.clone());
            (
                DenseIndex::from_vectors(&passages, &VectorsFile::load(v)?)?,
                None,
            )
        }
        None => {
            let spec = a
                .embedder
                .clone()
                .or_else(|| ctx.file.providers.embedder.clone())
                .unwrap_or_else(|| DEFAULT_EMBEDDER.to_owned());
            let provider = specs::embedder(&spec)?;
            check_provider(provider.as_ref())?;
            (DenseIndex::build(&passages, provider.as_ref())?, Some(spec))
        }
    };
    index.save(&a.out)?;
    eprintln!("embedded {} passages, dim {}", index.len(), index.dim());

    let mut r = Recorder::new(
        "index-dense",
        DenseSettings {
            embedder: spec,
            fingerprint: index.fingerprint().to_owned(),
            dim: index.dim(),
        },
    );
    for i in &inputs {
        r.input(i);
    }
    r.output(&a.out);
    Ok(r)
}

#[derive(Serialize)]
struct GenerateSettings {
    generator: String,
    seed: u64,
    params: GenerationParams,
}

pub fn generate(ctx: &Ctx, a: GenerateArgs) -> anyhow::Result<Recorder> {
    let g = &ctx.file.generation;
    let defaults = GenerationParams::default();
    let params = GenerationParams {
        n_per_passage: check_positive("n", a.n.or(g.n).unwrap_or(defaults.n_per_passage))?,
        top_k: check_positive("top-k", a.top_k.or(g.top_k).unwrap_or(defaults.top_k))?,
        top_p: check(
            "top-p",
            a.top_p.or(g.top_p).unwrap_or(defaults.top_p),
            |p| p > 0.0 && p <= 1.0,
            "in (0, 1]",
        )?,
        retries: defaults.retries,
    };
    let seed = a.seed.or(ctx.file.seed).unwrap_or(0);
    let spec = a
        .generator
        .clone()
        .or_else(|| ctx.file.providers.generator.clone())
        .unwrap_or_else(|| DEFAULT_GENERATOR.to_owned());
    let provider = specs::generator(&spec, seed)?;

    let passages = load_passages(&a.passages)?;
    let store = PassageStore::new(passages)?;
    let out = generate_examples(store.passages(), provider.as_ref(), &params)?;

    let records: Vec<MrcRecord> = out
        .examples
        .iter()
        .map(|ex| Ok(ex.to_record(store.get(&ex.passage_id)?)))
        .collect::<orqa_core::Result<_>>()?;
    write_jsonl(&a.out_mrc, &records)?;
    let mut r = Recorder::new(
        "generate-synthetic",
        GenerateSettings {
            generator: spec,
            seed,
            params,
        },
    );
    r.seed(seed);
    r.input(&a.passages);
    r.output(&a.out_mrc);
    if let Some(p) = &a.out_pairs {
        let pairs: Vec<_> = out
            .examples
            .iter()
            .map(SyntheticExample::to_retrieval_pair)
            .collect();
        write_jsonl(p, &pairs)?;
        r.output(p);
    }
    if let Some(p) = &a.out_skips {
        write_jsonl(p, &out.skips)?;
        r.output(p);
    }
    if let Some(p) = &a.out_ict {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ordered: Vec<&Passage> = store.passages().iter().collect();
        ordered.sort_by(|x, y| x.id.cmp(&y.id));
        let pairs: Vec<_> = ordered
            .into_iter()
            .filter_map(|p| sample_ict_pair(p, &mut rng).ok())
            .collect();
        write_jsonl(p, &pairs)?;
        r.output(p);
    }
    eprintln!(
        "generated {} examples from {} passages ({} sequences skipped, {} flagged)",
        out.examples.len(),
        store.len(),
        out.skips.len(),
        out.flagged()
    );
    Ok(r)
}

#[derive(Serialize)]
struct FilterSettings {
    reader: String,
    threshold: f64,
    strict: bool,
}

#[derive(Serialize)]
struct DroppedRecord<'a> {
    #[serde(flatten)]
    record: MrcRecord,
    reason: &'a DropReason,
}

pub fn filter(ctx: &Ctx, a: FilterArgs) -> anyhow::Result<Recorder> {
    let f = &ctx.file.filter;
    let threshold = a
        .threshold
        .or(f.threshold)
        .unwrap_or(DEFAULT_ROUNDTRIP_THRESHOLD);
    if threshold.is_nan() {
        return Err(usage("threshold must be a number"));
    }
    let strict = a.strict || f.strict.unwrap_or(false);
    let spec = a
        .reader
        .clone()
        .or_else(|| ctx.file.providers.reader.clone())
        .unwrap_or_else(|| DEFAULT_READER.to_owned());
    let reader = specs::reader(&spec)?;

    let store = PassageStore::new(load_passages(&a.passages)?)?;
    let records: Vec<MrcRecord> = jsonl::read(&a.examples)?;
    let examples = records
        .iter()
        .map(|rec| SyntheticExample::from_record(rec, store.get(&rec.passage_id)?))
        .collect::<orqa_core::Result<Vec<_>>>()?;
    let mode = if strict {
        FilterMode::Strict
    } else {
        FilterMode::ScoreOnly
    };
    let out = roundtrip_filter(examples, &store, reader.as_ref(), threshold, mode);

    let passages: HashMap<&str, &Passage> = store
        .passages()
        .iter()
        .map(|p| (p.id.as_str(), p))
        .collect();
    let kept: Vec<MrcRecord> = out
        .kept
        .iter()
        .map(|e| e.to_record(passages[e.passage_id.as_str()]))
        .collect();
    write_jsonl(&a.kept, &kept)?;
    let mut r = Recorder::new(
        "filter-roundtrip",
        FilterSettings {
            reader: spec,
            threshold,
            strict,
        },
    );
    r.input(&a.examples);
    r.input(&a.passages);
    r.output(&a.kept);
    if let Some(p) = &a.dropped {
        let dropped: Vec<DroppedRecord> = out
            .dropped
            .iter()
            .map(|d| DroppedRecord {
                record: d.example.to_record(passages[d.example.passage_id.as_str()]),
                reason: &d.reason,
            })
            .collect();
        write_jsonl(p, &dropped)?;
        r.output(p);
    }
    eprintln!(
        "kept {} of {} examples at threshold {threshold}",
        out.kept.len(),
        records.len()
    );
    Ok(r)
}

pub fn serve(a: ServeArgs) -> anyhow::Result<()> {
    let stdin = io::stdin().lock();
    let stdout = BufWriter::new(io::stdout().lock());
    match a.provider {
        ServedProvider::HashEmbed { dim, title } => {
            if dim == 0 {
                return Err(usage("--dim must be at least 1"));
            }
            serve_embedder(&HashEmbedder::new(dim).with_title(title), stdin, stdout)?;
        }
        ServedProvider::MockGenerator { seed } => {
            serve_generator(
                &MockGenerator::new(seed),
                &format!("mock-generator/v1/seed={seed}"),
                stdin,
                stdout,
            )?;
        }
        ServedProvider::LexicalReader => {
            serve_reader(
                &LexicalReader::default(),
                "lexical-reader/v1",
                stdin,
                stdout,
            )?;
        }
    }
    Ok(())
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "orqa",
    version,
    about = "Hybrid BM25 + dense open-retrieval question answering"
)]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Where to write the run manifest (default: next to the main output).
    #[arg(long, global = true, value_name = "FILE")]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split documents into sentence-aligned passages.
    Ingest(IngestArgs),
    /// Build a BM25 index over passages.
    IndexSparse(IndexSparseArgs),
    /// Embed passages and build a dense index.
    IndexDense(IndexDenseArgs),
    /// Retrieve passages for queries and write a run file.
    Search(SearchArgs),
    /// Generate synthetic QA examples from passages.
    GenerateSynthetic(GenerateArgs),
    /// Keep synthetic examples whose answer span the reader scores highly.
    FilterRoundtrip(FilterArgs),
    /// Answer questions end to end: retrieve, read, combine.
    RunOrqa(RunOrqaArgs),
    /// Score run and answer files against a dataset.
    Evaluate(EvaluateArgs),
    /// Grid-search K and the IR weight on a dev set.
    Tune(TuneArgs),
    /// Count shared passages between two run files at a cutoff.
    Overlap(OverlapArgs),
    /// Run a built-in provider over the line protocol on stdin/stdout.
    ServeProvider(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Documents as JSON lines `{id, title, text}`, or a SQuAD-style JSON file.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output passages (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Word limit per retrieval passage.
    #[arg(long)]
    pub max_words: Option<usize>,
    /// Chunk for generator input instead of retrieval.
    #[arg(long)]
    pub for_generation: bool,
    /// Token limit per generation chunk.
    #[arg(long)]
    pub generation_tokens: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StopWordsArg {
    None,
    English,
}

#[derive(Debug, Args)]
pub struct IndexSparseArgs {
    #[arg(long)]
    pub passages: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long, value_enum)]
    pub stopwords: Option<StopWordsArg>,
    /// Keep token case.
    #[arg(long)]
    pub no_lowercase: bool,
}

#[derive(Debug, Args)]
pub struct IndexDenseArgs {
    #[arg(long)]
    pub passages: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `hash:<dim>`, or `cmd:<command line>` for a subprocess provider.
    #[arg(long)]
    pub embedder: Option<String>,
    /// Precomputed passage vectors instead of an embedder.
    #[arg(long, conflicts_with = "embedder")]
    pub vectors: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Sparse,
    Dense,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RunFormatArg {
    Jsonl,
    Trec,
}

/// Index selection shared by retrieval commands.
#[derive(Debug, Args)]
pub struct RetrievalArgs {
    /// Index files; the kind is read from the file header. Give one sparse
    /// and one dense index for hybrid retrieval.
    #[arg(long, required = true, num_args = 1)]
    pub index: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Query embedder for dense and hybrid retrieval.
    #[arg(long)]
    pub embedder: Option<String>,
    #[arg(long)]
    pub sparse_weight: Option<f64>,
    #[arg(long)]
    pub candidate_depth: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub retrieval: RetrievalArgs,
    /// Queries as JSON lines with `query_id`/`question_id` and `query`/`question`.
    #[arg(long, required_unless_present = "query")]
    pub queries: Option<PathBuf>,
    /// A single query, reported as query id `q0`.
    #[arg(long, conflicts_with = "queries")]
    pub query: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum, default_value = "jsonl")]
    pub format: RunFormatArg,
    /// Run tag for TREC output.
    #[arg(long, default_value = "orqa")]
    pub tag: String,
    /// Output run file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub passages: PathBuf,
    /// `mock[:<seed>]` or `cmd:<command line>`.
    #[arg(long)]
    pub generator: Option<String>,
    /// Sequences per passage.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub top_p: Option<f64>,
    /// MRC records `{passage_id, question, answer_text, answer_start}`.
    #[arg(long)]
    pub out_mrc: PathBuf,
    /// Retrieval pairs `{question, positive_passage_id}`.
    #[arg(long)]
    pub out_pairs: Option<PathBuf>,
    /// Sequences that failed to parse or localize.
    #[arg(long)]
    pub out_skips: Option<PathBuf>,
    /// Also write one inverse-cloze pair per multi-sentence passage.
    #[arg(long)]
    pub out_ict: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// MRC records from `generate-synthetic`.
    #[arg(long)]
    pub examples: PathBuf,
    #[arg(long)]
    pub passages: PathBuf,
    /// `lexical` or `cmd:<command line>`.
    #[arg(long)]
    pub reader: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    /// Also require the reader's own answer to equal the generated one.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub kept: PathBuf,
    #[arg(long)]
    pub dropped: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunOrqaArgs {
    #[command(flatten)]
    pub retrieval: RetrievalArgs,
    /// Open-QA questions `{question_id, question, answers}` or query records.
    #[arg(long)]
    pub questions: PathBuf,
    #[arg(long)]
    pub passages: PathBuf,
    #[arg(long)]
    pub reader: Option<String>,
    /// Passages read per question.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub ir_weight: Option<f64>,
    /// Answers kept per question in the output (default: all K).
    #[arg(long)]
    pub top: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Open-QA dataset, or an MRC/SQuAD file to de-duplicate into one.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Run file to score with Match@k; needs `--passages`.
    #[arg(long, required_unless_present = "answers", requires = "passages")]
    pub run: Option<PathBuf>,
    /// Answer file from `run-orqa` to score with Top-n F1.
    #[arg(long)]
    pub answers: Option<PathBuf>,
    #[arg(long)]
    pub passages: Option<PathBuf>,
    /// Match@k cutoffs.
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    /// Top-n F1 cutoffs.
    #[arg(long, value_delimiter = ',')]
    pub ns: Option<Vec<usize>>,
    /// Report from an earlier `evaluate` to compare against with a paired t-test.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    /// System name in the text table.
    #[arg(long, default_value = "system")]
    pub label: String,
    /// JSON report.
    #[arg(long)]
    pub out: PathBuf,
    /// Plain-text table (default: printed to stdout).
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub retrieval: RetrievalArgs,
    /// Dev-set open-QA questions.
    #[arg(long)]
    pub questions: PathBuf,
    #[arg(long)]
    pub passages: PathBuf,
    #[arg(long)]
    pub reader: Option<String>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1"
    )]
    pub weights: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "10,20,40,100")]
    pub ks: Vec<usize>,
    /// Optimize Top-n F1.
    #[arg(long, default_value_t = 1)]
    pub top_n: usize,
    /// Best configuration as TOML, usable with `--config`.
    #[arg(long)]
    pub out: PathBuf,
    /// Objective value for every grid cell (JSON lines).
    #[arg(long)]
    pub grid: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OverlapArgs {
    #[arg(long)]
    pub run_a: PathBuf,
    #[arg(long)]
    pub run_b: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    /// Per-query counts (JSON lines); the mean is always printed.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(subcommand)]
    pub provider: ServedProvider,
}

#[derive(Debug, Subcommand)]
pub enum ServedProvider {
    /// Hashing embedder.
    HashEmbed {
        #[arg(long, default_value_t = 256)]
        dim: usize,
        /// Prepend titles to passage text.
        #[arg(long)]
        title: bool,
    },
    /// Template question generator.
    MockGenerator {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sentence-overlap reader.
    LexicalReader,
}

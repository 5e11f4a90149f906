//! Library results checked against brute-force reimplementations.

use std::collections::HashMap;

use orqa_core::corpus::Passage;
use orqa_core::dense::{dense_search, hash_embed, DenseIndex, EmbeddingProvider, HashEmbedder};
use orqa_core::fusion::{combine, hybrid_search, FusionConfig, Ranking};
use orqa_core::pipeline::{tune, Objective, Orqa, OrqaConfig, Retriever};
use orqa_core::reader::{AnswerCandidate, ReaderProvider};
use orqa_core::sparse::{bm25_score, sparse_search, Bm25Params, SparseIndex};
use orqa_core::{AnalyzerConfig, PassageStore, Result, StopWords};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Textbook BM25 straight from the token lists.
fn oracle_bm25(docs: &[Vec<String>], query: &[String], d: usize, k1: f64, b: f64) -> f64 {
    let n = docs.len() as f64;
    let avg = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let len = docs[d].len() as f64;
    query
        .iter()
        .map(|q| {
            let df = docs.iter().filter(|doc| doc.contains(q)).count() as f64;
            if df == 0.0 {
                return 0.0;
            }
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let tf = docs[d].iter().filter(|t| *t == q).count() as f64;
            idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avg))
        })
        .sum()
}

fn random_corpus(rng: &mut ChaCha8Rng) -> Vec<Passage> {
    let vocab = rng.gen_range(2..=20);
    let n = rng.gen_range(1..=50);
    (0..n)
        .map(|i| {
            let len = rng.gen_range(1..=15);
            let text: Vec<String> = (0..len)
                .map(|_| format!("t{}", rng.gen_range(0..vocab)))
                .collect();
            Passage::new(format!("p{i:02}"), text.join(" "))
        })
        .collect()
}

fn plain() -> AnalyzerConfig {
    AnalyzerConfig {
        lowercase: true,
        stop_words: StopWords::None,
    }
}

#[test]
fn sparse_scores_match_textbook_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let passages = random_corpus(&mut rng);
        let docs: Vec<Vec<String>> = passages.iter().map(|p| tokens(&p.text)).collect();
        let params = Bm25Params::default();
        let index = SparseIndex::build(&passages, params, plain()).unwrap();
        let query = format!(
            "t{} t{} t{}",
            rng.gen_range(0..20),
            rng.gen_range(0..20),
            rng.gen_range(0..20)
        );
        let q = tokens(&query);
        for d in 0..passages.len() {
            let ours = bm25_score(&index, &query, d).unwrap();
            let oracle = oracle_bm25(&docs, &q, d, params.k1, params.b);
            assert!((ours - oracle).abs() < 1e-9, "{ours} vs {oracle}");
        }
        let mut expected: Vec<(usize, f64)> = (0..passages.len())
            .map(|d| (d, bm25_score(&index, &query, d).unwrap()))
            .filter(|(_, s)| *s > 0.0)
            .collect();
        expected.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let got = sparse_search(&index, &query, passages.len());
        let ids: Vec<&str> = expected
            .iter()
            .map(|(d, _)| passages[*d].id.as_str())
            .collect();
        assert_eq!(got.ids(), ids);
    }
}

#[test]
fn dense_search_matches_full_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let provider = HashEmbedder::new(16);
    for _ in 0..20 {
        let passages = random_corpus(&mut rng);
        let index = DenseIndex::build(&passages, &provider).unwrap();
        let query = format!("t{} t{}", rng.gen_range(0..20), rng.gen_range(0..20));
        let q = hash_embed(&query, 16);
        let mut scan: Vec<(usize, f64)> = passages
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let v = provider.embed_passage(&p.title, &p.text).unwrap();
                (
                    i,
                    q.iter().zip(&v).map(|(a, b)| f64::from(a * b)).sum::<f64>(),
                )
            })
            .collect();
        scan.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let k = rng.gen_range(1..=passages.len());
        let got = dense_search(&index, &query, k, &provider).unwrap();
        for (e, (i, s)) in got.entries().iter().zip(&scan) {
            assert!((e.score - s).abs() < 1e-5);
            // Near-ties may legitimately swap under different summation order.
            if e.passage_id != passages[*i].id {
                let other = scan
                    .iter()
                    .find(|(j, _)| passages[*j].id == e.passage_id)
                    .unwrap();
                assert!((other.1 - s).abs() < 1e-5);
            }
        }
        assert_eq!(got.len(), k);
    }
}

#[test]
fn hybrid_equals_full_union_fusion_when_depth_covers_corpus() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let provider = HashEmbedder::new(32);
    for _ in 0..30 {
        let passages = random_corpus(&mut rng);
        let sparse = SparseIndex::build(&passages, Bm25Params::default(), plain()).unwrap();
        let dense = DenseIndex::build(&passages, &provider).unwrap();
        let query = format!("t{} t{}", rng.gen_range(0..20), rng.gen_range(0..20));
        let config = FusionConfig {
            sparse_weight: 0.3,
            candidate_depth: passages.len(),
        };
        let hybrid =
            hybrid_search(&sparse, &dense, &provider, &query, passages.len(), &config).unwrap();

        // Score every passage on both sides, including zero BM25 scores.
        let all_sparse: Vec<(String, f64)> = (0..passages.len())
            .map(|d| (passages[d].id.clone(), sparse.score(&query, d).unwrap()))
            .collect();
        let norm = |v: &[f64]| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter()
                .map(|x| if n == 0.0 { *x } else { x / n })
                .collect::<Vec<_>>()
        };
        let qv = dense.embed_query(&provider, &query).unwrap();
        let sv: Vec<f64> = all_sparse.iter().map(|x| x.1).collect();
        let dv: Vec<f64> = (0..passages.len())
            .map(|d| dense.score_vector(&qv, d))
            .collect();
        let (sn, dn) = (norm(&sv), norm(&dv));
        let by_id: HashMap<&str, f64> = passages
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.as_str(), 0.3 * sn[i] + 0.7 * dn[i]))
            .collect();
        assert_eq!(hybrid.len(), passages.len());
        for e in hybrid.entries() {
            assert!((e.score - by_id[e.passage_id.as_str()]).abs() < 1e-12);
        }
    }
}

#[test]
fn convex_endpoints_reproduce_component_orders() {
    let a = Ranking::new(vec![
        ("x".into(), 5.0),
        ("y".into(), 3.0),
        ("z".into(), 1.0),
    ])
    .unwrap();
    let b = Ranking::new(vec![
        ("z".into(), 0.9),
        ("y".into(), 0.5),
        ("x".into(), 0.1),
    ])
    .unwrap();
    assert_eq!(combine(&a, &b, 1.0).unwrap().ids(), a.ids());
    assert_eq!(combine(&a, &b, 0.0).unwrap().ids(), b.ids());
}

struct Fixed(Vec<(&'static str, f64)>);

impl Retriever for Fixed {
    fn retrieve(&self, _query: &str, k: usize) -> Result<Ranking> {
        let mut r = Ranking::new(
            self.0
                .iter()
                .map(|(id, s)| ((*id).to_owned(), *s))
                .collect(),
        )?;
        r.truncate(k);
        Ok(r)
    }
}

/// Answers with the whole passage and a per-passage score.
struct TableReader(HashMap<&'static str, f64>);

impl ReaderProvider for TableReader {
    fn read(&self, _question: &str, passage: &Passage) -> Result<AnswerCandidate> {
        Ok(AnswerCandidate {
            text: passage.text.clone(),
            start: 0,
            end: passage.text.len(),
            reader_score: self.0[passage.id.as_str()],
            passage_id: passage.id.clone(),
        })
    }

    fn score_span(&self, _q: &str, passage: &Passage, _s: usize, _e: usize) -> Result<f64> {
        Ok(self.0[passage.id.as_str()])
    }
}

#[test]
fn tune_finds_constructed_winner() {
    // IR (1.0, 0.9) normalizes to (0.7433, 0.6690); MRC (1, 3) to (0.3162, 0.9487).
    // K=1 only ever sees pa (F1 0). At K=2, w=0.2 ranks pb first (0.4016 vs 0.8927)
    // and w=0.9 ranks pa first (0.7006 vs 0.6970). The winner is (2, 0.2).
    let store = PassageStore::new(vec![
        Passage::new("pa", "alpha"),
        Passage::new("pb", "beta"),
    ])
    .unwrap();
    let retriever = Fixed(vec![("pa", 1.0), ("pb", 0.9)]);
    let reader = TableReader(HashMap::from([("pa", 1.0), ("pb", 3.0)]));
    let system = Orqa {
        retriever: &retriever,
        reader: &reader,
        store: &store,
    };
    let dev =
        vec![orqa_core::eval::OpenQAExample::new("q", "which?", vec!["beta".into()]).unwrap()];
    let out = tune(
        &dev,
        &system,
        &OrqaConfig::default(),
        &[0.9, 0.2],
        &[2, 1],
        Objective::TopNF1(1),
    )
    .unwrap();
    assert_eq!((out.best.k, out.best.ir_weight), (2, 0.2));
    let cell = |k: usize, w: f64| {
        out.grid
            .iter()
            .find(|g| g.k == k && g.ir_weight == w)
            .unwrap()
            .objective
    };
    assert_eq!(cell(1, 0.2), 0.0);
    assert_eq!(cell(1, 0.9), 0.0);
    assert_eq!(cell(2, 0.2), 1.0);
    assert_eq!(cell(2, 0.9), 0.0);
}

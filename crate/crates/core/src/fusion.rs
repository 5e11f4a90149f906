//! Rankings, score normalization and convex sparse/dense fusion.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dense::{DenseIndex, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::sparse::SparseIndex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPassage {
    pub passage_id: String,
    pub score: f64,
}

/// Passages in non-increasing score order with unique ids and finite scores.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ranking {
    entries: Vec<ScoredPassage>,
}

impl Ranking {
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        let mut prev = f64::INFINITY;
        for (id, score) in &entries {
            if !score.is_finite() {
                return Err(Error::invalid(format!("non-finite score for {id:?}")));
            }
            if *score > prev {
                return Err(Error::invalid("ranking scores must be non-increasing"));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("passage {id:?} ranked twice")));
            }
            prev = *score;
        }
        Ok(Self::from_sorted_unchecked(entries))
    }

    pub(crate) fn from_sorted_unchecked(entries: Vec<(String, f64)>) -> Self {
        Self {
            entries: entries
                .into_iter()
                .map(|(passage_id, score)| ScoredPassage { passage_id, score })
                .collect(),
        }
    }

    pub fn entries(&self) -> &[ScoredPassage] {
        &self.entries
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.passage_id.as_str()).collect()
    }

    pub fn top(&self, k: usize) -> &[ScoredPassage] {
        &self.entries[..k.min(self.entries.len())]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn truncate(&mut self, k: usize) {
        self.entries.truncate(k);
    }
}

/// Descending score, ascending ordinal.
pub(crate) fn rank_order(a: &(u32, f64), b: &(u32, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Top `k` of `(ordinal, score)` pairs under [`rank_order`].
pub(crate) fn top_k(scores: impl Iterator<Item = (u32, f64)>, k: usize) -> Vec<(u32, f64)> {
    if k == 0 {
        return Vec::new();
    }
    let mut all: Vec<(u32, f64)> = scores.collect();
    if all.len() > k {
        all.select_nth_unstable_by(k - 1, rank_order);
        all.truncate(k);
    }
    all.sort_unstable_by(rank_order);
    all
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub sparse_weight: f64,
    pub candidate_depth: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            sparse_weight: 0.3,
            candidate_depth: 100,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        check_weight(self.sparse_weight)?;
        if self.candidate_depth == 0 {
            return Err(Error::invalid("candidate_depth must be at least 1"));
        }
        Ok(())
    }
}

pub(crate) fn check_weight(w: f64) -> Result<()> {
    if (0.0..=1.0).contains(&w) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "weight must lie in [0, 1], got {w}"
        )))
    }
}

/// Divide by the L2 norm; a zero vector is returned unchanged.
pub fn l2_normalize(scores: &[f64]) -> Vec<f64> {
    let norm = scores.iter().map(|s| s * s).sum::<f64>().sqrt();
    if norm == 0.0 {
        scores.to_vec()
    } else {
        scores.iter().map(|s| s / norm).collect()
    }
}

fn convex(a: &[f64], b: &[f64], weight_a: f64) -> Vec<f64> {
    let (na, nb) = (l2_normalize(a), l2_normalize(b));
    na.iter()
        .zip(&nb)
        .map(|(x, y)| weight_a * x + (1.0 - weight_a) * y)
        .collect()
}

pub type Rescorer<'a> = &'a dyn Fn(&str) -> Result<f64>;

/// Fuse two opaque rankings. Passages missing from one side score 0 there.
pub fn combine(rank_a: &Ranking, rank_b: &Ranking, weight_a: f64) -> Result<Ranking> {
    combine_with(rank_a, rank_b, weight_a, None, None)
}

/// Fuse two rankings over the union of their passages.
///
/// A passage missing from one side is rescored with that side's rescorer
/// when given, else scored 0. Each side is L2-normalized over the union
/// before the convex combination. Ties break by passage id.
pub fn combine_with(
    rank_a: &Ranking,
    rank_b: &Ranking,
    weight_a: f64,
    rescore_a: Option<Rescorer<'_>>,
    rescore_b: Option<Rescorer<'_>>,
) -> Result<Ranking> {
    check_weight(weight_a)?;
    let mut union: BTreeMap<&str, (Option<f64>, Option<f64>)> = BTreeMap::new();
    for e in &rank_a.entries {
        union.entry(&e.passage_id).or_default().0 = Some(e.score);
    }
    for e in &rank_b.entries {
        union.entry(&e.passage_id).or_default().1 = Some(e.score);
    }
    let fill = |id: &str, have: Option<f64>, rescore: Option<Rescorer<'_>>| -> Result<f64> {
        match (have, rescore) {
            (Some(s), _) => Ok(s),
            (None, Some(f)) => f(id),
            (None, None) => Ok(0.0),
        }
    };
    let mut ids = Vec::with_capacity(union.len());
    let mut a = Vec::with_capacity(union.len());
    let mut b = Vec::with_capacity(union.len());
    for (id, (sa, sb)) in union {
        ids.push(id);
        a.push(fill(id, sa, rescore_a)?);
        b.push(fill(id, sb, rescore_b)?);
    }
    let combined = convex(&a, &b, weight_a);
    let mut out: Vec<(String, f64)> = ids.into_iter().map(str::to_owned).zip(combined).collect();
    out.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
    Ok(Ranking::from_sorted_unchecked(out))
}

fn check_id_space(sparse: &SparseIndex, dense: &DenseIndex) -> Result<()> {
    if sparse.len() != dense.len() {
        return Err(Error::IdSpaceMismatch(format!(
            "{} sparse vs {} dense passages",
            sparse.len(),
            dense.len()
        )));
    }
    if let Some((i, (s, d))) = sparse
        .passage_ids()
        .iter()
        .zip(dense.passage_ids())
        .enumerate()
        .find(|(_, (s, d))| s != d)
    {
        return Err(Error::IdSpaceMismatch(format!(
            "ordinal {i}: {s:?} vs {d:?}"
        )));
    }
    Ok(())
}

/// Sparse+dense retrieval with exact rescoring of each side's missing candidates.
///
/// Both indices must share one passage id space (same ids, same ordinals).
/// Ties break by ordinal, matching the single-retriever searches.
pub fn hybrid_search(
    sparse: &SparseIndex,
    dense: &DenseIndex,
    provider: &dyn EmbeddingProvider,
    query: &str,
    k: usize,
    config: &FusionConfig,
) -> Result<Ranking> {
    config.validate()?;
    check_id_space(sparse, dense)?;
    let qv = dense.embed_query(provider, query)?;

    let mut union: BTreeMap<u32, (Option<f64>, Option<f64>)> = BTreeMap::new();
    for (o, s) in sparse.search_ordinals(query, config.candidate_depth) {
        union.entry(o).or_default().0 = Some(s);
    }
    for (o, s) in dense.search_vector(&qv, config.candidate_depth) {
        union.entry(o).or_default().1 = Some(s);
    }

    let mut ords = Vec::with_capacity(union.len());
    let mut sv = Vec::with_capacity(union.len());
    let mut dv = Vec::with_capacity(union.len());
    for (o, (s, d)) in union {
        ords.push(o);
        sv.push(match s {
            Some(s) => s,
            None => sparse.score(query, o as usize)?,
        });
        dv.push(match d {
            Some(d) => d,
            None => dense.score_vector(&qv, o as usize),
        });
    }
    let combined = convex(&sv, &dv, config.sparse_weight);
    let ranked = top_k(ords.into_iter().zip(combined), k);
    Ok(Ranking::from_sorted_unchecked(
        ranked
            .into_iter()
            .map(|(o, s)| (sparse.passage_ids()[o as usize].clone(), s))
            .collect(),
    ))
}

/// Number of passage ids shared by the two top-k lists.
pub fn overlap_at_k(rank_a: &Ranking, rank_b: &Ranking, k: usize) -> usize {
    let a: HashSet<&str> = rank_a
        .top(k)
        .iter()
        .map(|e| e.passage_id.as_str())
        .collect();
    rank_b
        .top(k)
        .iter()
        .filter(|e| a.contains(e.passage_id.as_str()))
        .count()
}

/// One line of a line-delimited run file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub query_id: String,
    pub rank: usize,
    pub passage_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunFormat {
    Jsonl,
    /// `qid Q0 pid rank score tag`
    Trec,
}

pub fn write_run(
    w: &mut impl Write,
    query_id: &str,
    ranking: &Ranking,
    format: RunFormat,
    tag: &str,
) -> std::io::Result<()> {
    for (i, e) in ranking.entries.iter().enumerate() {
        match format {
            RunFormat::Jsonl => {
                let rec = RunRecord {
                    query_id: query_id.to_owned(),
                    rank: i + 1,
                    passage_id: e.passage_id.clone(),
                    score: e.score,
                };
                serde_json::to_writer(&mut *w, &rec)?;
                writeln!(w)?;
            }
            RunFormat::Trec => {
                writeln!(
                    w,
                    "{query_id} Q0 {} {} {} {tag}",
                    e.passage_id,
                    i + 1,
                    e.score
                )?;
            }
        }
    }
    Ok(())
}

/// Read a run file in either format, grouped by query in first-seen order.
pub fn read_run(path: impl AsRef<Path>) -> Result<Vec<(String, Ranking)>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, Vec<(usize, String, f64)>> = BTreeMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let malformed = |message: String| Error::Malformed {
            path: path.to_owned(),
            line: idx + 1,
            message,
        };
        let rec = if trimmed.starts_with('{') {
            serde_json::from_str::<RunRecord>(trimmed).map_err(|e| malformed(e.to_string()))?
        } else {
            let f: Vec<&str> = trimmed.split_whitespace().collect();
            if f.len() != 6 {
                return Err(malformed(format!(
                    "expected 6 TREC fields, got {}",
                    f.len()
                )));
            }
            RunRecord {
                query_id: f[0].to_owned(),
                passage_id: f[2].to_owned(),
                rank: f[3]
                    .parse()
                    .map_err(|_| malformed(format!("bad rank {:?}", f[3])))?,
                score: f[4]
                    .parse()
                    .map_err(|_| malformed(format!("bad score {:?}", f[4])))?,
            }
        };
        if !rows.contains_key(&rec.query_id) {
            order.push(rec.query_id.clone());
        }
        rows.entry(rec.query_id)
            .or_default()
            .push((rec.rank, rec.passage_id, rec.score));
    }
    order
        .into_iter()
        .map(|qid| {
            let mut r = rows.remove(&qid).unwrap_or_default();
            r.sort_by_key(|(rank, _, _)| *rank);
            let ranking = Ranking::new(r.into_iter().map(|(_, id, s)| (id, s)).collect())?;
            Ok((qid, ranking))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ranking(v: &[(&str, f64)]) -> Ranking {
        Ranking::new(v.iter().map(|(i, s)| (i.to_string(), *s)).collect()).unwrap()
    }

    #[test]
    fn l2_examples() {
        assert_eq!(l2_normalize(&[3.0, 4.0]), [0.6, 0.8]);
        assert_eq!(l2_normalize(&[0.0, 0.0]), [0.0, 0.0]);
        assert_eq!(l2_normalize(&[5.0]), [1.0]);
        assert!(l2_normalize(&[]).is_empty());
    }

    #[test]
    fn worked_combination() {
        let sparse = ranking(&[("p2", 4.0), ("p1", 3.0)]);
        let dense = ranking(&[("p1", 0.8), ("p2", 0.6)]);
        let out = combine(&sparse, &dense, FusionConfig::default().sparse_weight).unwrap();
        assert_eq!(out.ids(), ["p1", "p2"]);
        assert!((out.entries()[0].score - 0.74).abs() < 1e-9);
        assert!((out.entries()[1].score - 0.66).abs() < 1e-9);
    }

    #[test]
    fn missing_candidates_zero_fill_or_rescore() {
        let a = ranking(&[("x", 1.0)]);
        let b = ranking(&[("y", 1.0)]);
        let zero = combine(&a, &b, 0.5).unwrap();
        assert_eq!(zero.ids(), ["x", "y"]);
        assert_eq!(zero.entries()[0].score, zero.entries()[1].score);

        let rescore_b = |id: &str| Ok(if id == "x" { 3.0 } else { 0.0 });
        let out = combine_with(&a, &b, 0.5, None, Some(&rescore_b)).unwrap();
        assert_eq!(out.ids(), ["x", "y"]);
        assert!(out.entries()[0].score > out.entries()[1].score);
    }

    #[test]
    fn weight_endpoints_and_validation() {
        let a = ranking(&[("p3", 9.0), ("p1", 5.0), ("p2", 1.0)]);
        let b = ranking(&[("p2", 2.0), ("p1", 1.5), ("p3", 1.0)]);
        assert_eq!(combine(&a, &b, 1.0).unwrap().ids(), a.ids());
        assert_eq!(combine(&a, &b, 0.0).unwrap().ids(), b.ids());
        assert!(combine(&a, &b, 1.5).is_err());
        assert!(combine(&a, &b, -0.1).is_err());
    }

    #[test]
    fn overlap_examples() {
        let a = ranking(&[("p1", 3.0), ("p2", 2.0), ("p3", 1.0)]);
        let b = ranking(&[("p3", 3.0), ("p4", 2.0), ("p5", 1.0)]);
        assert_eq!(overlap_at_k(&a, &b, 3), 1);
        assert_eq!(overlap_at_k(&a, &a, 10), 3);
        let c = ranking(&[("q", 1.0)]);
        assert_eq!(overlap_at_k(&a, &c, 3), 0);
    }

    #[test]
    fn ranking_invariants_enforced() {
        assert!(Ranking::new(vec![("a".into(), 1.0), ("b".into(), 2.0)]).is_err());
        assert!(Ranking::new(vec![("a".into(), 1.0), ("a".into(), 0.5)]).is_err());
        assert!(Ranking::new(vec![("a".into(), f64::NAN)]).is_err());
    }

    #[test]
    fn top_k_tie_break() {
        let got = top_k(vec![(3, 1.0), (1, 1.0), (2, 2.0), (0, 0.5)].into_iter(), 3);
        assert_eq!(got, [(2, 2.0), (1, 1.0), (3, 1.0)]);
        assert!(top_k(vec![(1, 1.0)].into_iter(), 0).is_empty());
    }

    #[test]
    fn run_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = ranking(&[("p1", 2.5), ("p2", 1.0)]);
        for (fmt, name) in [(RunFormat::Jsonl, "r.jsonl"), (RunFormat::Trec, "r.trec")] {
            let path = dir.path().join(name);
            let mut buf = Vec::new();
            write_run(&mut buf, "q1", &r, fmt, "hybrid").unwrap();
            write_run(&mut buf, "q0", &r, fmt, "hybrid").unwrap();
            std::fs::write(&path, &buf).unwrap();
            let back = read_run(&path).unwrap();
            assert_eq!(back.len(), 2);
            assert_eq!(back[0].0, "q1");
            assert_eq!(back[0].1, r);
        }
    }

    fn side() -> impl Strategy<Value = Vec<(u8, f64)>> {
        proptest::collection::vec((0u8..30, 0.01f64..10.0), 1..15)
    }

    fn to_ranking(v: &[(u8, f64)], scale: f64) -> Ranking {
        let mut dedup: BTreeMap<String, f64> = BTreeMap::new();
        for (id, s) in v {
            dedup.insert(format!("p{id:02}"), s * scale);
        }
        let mut e: Vec<(String, f64)> = dedup.into_iter().collect();
        e.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ranking::new(e).unwrap()
    }

    proptest! {
        #[test]
        fn combined_output_is_a_valid_ranking(a in side(), b in side(), w in 0.0f64..=1.0) {
            let out = combine(&to_ranking(&a, 1.0), &to_ranking(&b, 1.0), w).unwrap();
            let pairs: Vec<(String, f64)> = out.entries().iter().map(|e| (e.passage_id.clone(), e.score)).collect();
            prop_assert!(Ranking::new(pairs).is_ok());
        }

        #[test]
        fn power_of_two_scaling_preserves_combination(a in side(), b in side(), w in 0.0f64..=1.0, e in -8i32..8) {
            let c = 2f64.powi(e);
            let base = combine(&to_ranking(&a, 1.0), &to_ranking(&b, 1.0), w).unwrap();
            let scaled = combine(&to_ranking(&a, c), &to_ranking(&b, 1.0), w).unwrap();
            prop_assert_eq!(base, scaled);
        }
    }
}

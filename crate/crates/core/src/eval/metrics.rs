//! SQuAD-style answer normalization, EM/F1, Match@k and Top-n F1.

use std::collections::{HashMap, HashSet};

use crate::corpus::PassageStore;
use crate::error::Result;
use crate::fusion::Ranking;

/// Lowercase, drop punctuation, drop the articles "a", "an", "the", collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let stripped: String = lowered
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    let mut out = String::with_capacity(stripped.len());
    for w in stripped
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
    {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(w);
    }
    out
}

pub fn em(pred: &str, gold: &str) -> f64 {
    f64::from(u8::from(normalize_answer(pred) == normalize_answer(gold)))
}

pub fn token_f1(pred: &str, gold: &str) -> f64 {
    let p = normalize_answer(pred);
    let g = normalize_answer(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    match (pt.is_empty(), gt.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gt {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pt {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    // Equal to 2PR/(P+R) with P = c/|p|, R = c/|g|.
    2.0 * common as f64 / (pt.len() + gt.len()) as f64
}

/// Normalized golds, dropping those that normalize to nothing.
fn normalized_golds(golds: &[String]) -> Vec<String> {
    golds
        .iter()
        .map(|g| normalize_answer(g))
        .filter(|g| !g.is_empty())
        .collect()
}

/// 1-based rank of the first passage among the top `depth` containing a gold answer.
pub fn first_match_rank(
    ranking: &Ranking,
    golds: &[String],
    depth: usize,
    store: &PassageStore,
) -> Result<Option<usize>> {
    let golds = normalized_golds(golds);
    for (i, entry) in ranking.top(depth).iter().enumerate() {
        let text = normalize_answer(&store.get(&entry.passage_id)?.text);
        if golds.iter().any(|g| text.contains(g.as_str())) {
            return Ok(Some(i + 1));
        }
    }
    Ok(None)
}

pub fn match_at_k(
    ranking: &Ranking,
    golds: &[String],
    k: usize,
    store: &PassageStore,
) -> Result<f64> {
    Ok(f64::from(u8::from(
        first_match_rank(ranking, golds, k, store)?.is_some(),
    )))
}

/// Best F1 over the first `n` distinct (after normalization) answers and all golds.
pub fn top_n_f1<S: AsRef<str>>(answers: &[S], golds: &[String], n: usize) -> f64 {
    let mut seen = HashSet::new();
    answers
        .iter()
        .filter(|a| seen.insert(normalize_answer(a.as_ref())))
        .take(n)
        .flat_map(|a| golds.iter().map(move |g| token_f1(a.as_ref(), g)))
        .fold(0.0, f64::max)
}

//! Per-query scoring and aggregate reports.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::OpenQAExample;
use super::metrics::{first_match_rank, top_n_f1};
use crate::corpus::PassageStore;
use crate::error::{Error, Result};
use crate::fusion::Ranking;

/// Neumaier-compensated sum, so means do not depend on accumulated rounding.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn match_metric(k: usize) -> String {
    format!("M@{k}")
}

pub fn top_f1_metric(n: usize) -> String {
    format!("Top-{n} F1")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScores {
    pub query_id: String,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Metric names in column order.
    pub metrics: Vec<String>,
    /// Mean of the per-query values for each metric.
    pub aggregates: BTreeMap<String, f64>,
    pub per_query: Vec<QueryScores>,
}

impl EvalReport {
    fn assemble(metrics: Vec<String>, per_query: Vec<QueryScores>) -> Self {
        let n = per_query.len() as f64;
        let aggregates = metrics
            .iter()
            .map(|m| {
                let total = compensated_sum(per_query.iter().map(|q| q.scores[m]));
                (m.clone(), total / n)
            })
            .collect();
        Self {
            metrics,
            aggregates,
            per_query,
        }
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        self.aggregates.get(metric).copied()
    }

    /// Per-query values of one metric, in dataset order.
    pub fn column(&self, metric: &str) -> Option<Vec<f64>> {
        self.per_query
            .iter()
            .map(|q| q.scores.get(metric).copied())
            .collect()
    }
}

/// Aligned plain-text table, one row per system, values as percentages.
pub fn render_table(rows: &[(&str, &EvalReport)]) -> String {
    let Some((_, first)) = rows.first() else {
        return String::new();
    };
    let mut header = vec!["System".to_owned()];
    header.extend(first.metrics.iter().cloned());
    let mut cells = vec![header];
    for (name, report) in rows {
        let mut row = vec![(*name).to_owned()];
        for m in &first.metrics {
            row.push(
                report
                    .get(m)
                    .map_or_else(|| "-".to_owned(), |v| format!("{:.2}", v * 100.0)),
            );
        }
        cells.push(row);
    }
    let widths: Vec<usize> = (0..cells[0].len())
        .map(|c| {
            cells
                .iter()
                .map(|r| r[c].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for (i, row) in cells.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            if c == 0 {
                let _ = write!(out, "{cell:<w$}", w = widths[c]);
            } else {
                let _ = write!(out, "  {cell:>w$}", w = widths[c]);
            }
        }
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

fn check_dataset(dataset: &[OpenQAExample], cutoffs: &[usize]) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::invalid("evaluation dataset is empty"));
    }
    if cutoffs.is_empty() || cutoffs.contains(&0) {
        return Err(Error::invalid("cutoffs must be non-empty and at least 1"));
    }
    Ok(())
}

/// Match@k for each `k`; queries without a ranking score 0.
pub fn evaluate_rankings(
    dataset: &[OpenQAExample],
    rankings: &HashMap<String, Ranking>,
    ks: &[usize],
    store: &PassageStore,
) -> Result<EvalReport> {
    check_dataset(dataset, ks)?;
    let depth = ks.iter().copied().max().unwrap_or(1);
    let empty = Ranking::default();
    let per_query = dataset
        .par_iter()
        .map(|ex| {
            let ranking = rankings.get(&ex.question_id).unwrap_or(&empty);
            let first = first_match_rank(ranking, &ex.answers, depth, store)?;
            let scores = ks
                .iter()
                .map(|&k| {
                    (
                        match_metric(k),
                        f64::from(u8::from(first.is_some_and(|r| r <= k))),
                    )
                })
                .collect();
            Ok(QueryScores {
                query_id: ex.question_id.clone(),
                scores,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::assemble(
        ks.iter().map(|&k| match_metric(k)).collect(),
        per_query,
    ))
}

/// Runs `retrieve(question, depth)` for every example, then scores Match@k.
pub fn evaluate_retrieval(
    dataset: &[OpenQAExample],
    retrieve: impl Fn(&str, usize) -> Result<Ranking> + Sync,
    ks: &[usize],
    store: &PassageStore,
) -> Result<EvalReport> {
    check_dataset(dataset, ks)?;
    let depth = ks.iter().copied().max().unwrap_or(1);
    let rankings = dataset
        .par_iter()
        .map(|ex| Ok((ex.question_id.clone(), retrieve(&ex.question, depth)?)))
        .collect::<Result<HashMap<_, _>>>()?;
    evaluate_rankings(dataset, &rankings, ks, store)
}

/// Top-n F1 for each `n` over ranked answer strings; missing queries score 0.
pub fn evaluate_answers(
    dataset: &[OpenQAExample],
    answers: &HashMap<String, Vec<String>>,
    ns: &[usize],
) -> Result<EvalReport> {
    check_dataset(dataset, ns)?;
    let per_query = dataset
        .par_iter()
        .map(|ex| {
            let predicted = answers.get(&ex.question_id).map_or(&[][..], Vec::as_slice);
            QueryScores {
                query_id: ex.question_id.clone(),
                scores: ns
                    .iter()
                    .map(|&n| (top_f1_metric(n), top_n_f1(predicted, &ex.answers, n)))
                    .collect(),
            }
        })
        .collect();
    Ok(EvalReport::assemble(
        ns.iter().map(|&n| top_f1_metric(n)).collect(),
        per_query,
    ))
}

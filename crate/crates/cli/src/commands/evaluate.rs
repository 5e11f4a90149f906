use std::collections::{BTreeMap, HashMap};

use anyhow::Context;
use orqa_core::corpus::PassageStore;
use orqa_core::eval::dataset::load_open;
use orqa_core::eval::report::render_table;
use orqa_core::eval::{evaluate_answers, evaluate_rankings, paired_t_test, EvalReport};
use orqa_core::fusion::read_run;
use orqa_core::jsonl;
use serde::{Deserialize, Serialize};

use super::retrieval::AnswerRecord;
use super::{check_positive, Ctx};
use crate::cli::EvaluateArgs;
use crate::manifest::Recorder;

const DEFAULT_KS: [usize; 3] = [20, 40, 100];
const DEFAULT_NS: [usize; 2] = [1, 5];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: String,
    pub mean: f64,
    pub baseline_mean: f64,
    pub t: f64,
    pub p: f64,
    pub df: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub queries: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answers: Option<EvalReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub comparisons: Vec<Comparison>,
}

impl Report {
    fn parts(&self) -> impl Iterator<Item = &EvalReport> {
        self.retrieval.iter().chain(&self.answers)
    }

    /// Retrieval and answer metrics side by side.
    fn merged(&self) -> EvalReport {
        let mut metrics = Vec::new();
        let mut aggregates = BTreeMap::new();
        for part in self.parts() {
            metrics.extend(part.metrics.iter().cloned());
            aggregates.extend(part.aggregates.clone());
        }
        EvalReport {
            metrics,
            aggregates,
            per_query: Vec::new(),
        }
    }

    fn per_query(&self, metric: &str) -> Option<HashMap<&str, f64>> {
        let part = self
            .parts()
            .find(|p| p.metrics.iter().any(|m| m == metric))?;
        Some(
            part.per_query
                .iter()
                .filter_map(|q| Some((q.query_id.as_str(), *q.scores.get(metric)?)))
                .collect(),
        )
    }
}

fn compare(current: &Report, baseline: &Report) -> anyhow::Result<Vec<Comparison>> {
    let mut out = Vec::new();
    for part in current.parts() {
        for metric in &part.metrics {
            let Some(base) = baseline.per_query(metric) else {
                continue;
            };
            let mut a = Vec::new();
            let mut b = Vec::new();
            for q in &part.per_query {
                let base_value = base.get(q.query_id.as_str()).with_context(|| {
                    format!(
                        "baseline report has no {metric} score for query {:?}",
                        q.query_id
                    )
                })?;
                a.push(q.scores[metric]);
                b.push(*base_value);
            }
            let t = paired_t_test(&a, &b)?;
            out.push(Comparison {
                metric: metric.clone(),
                mean: part.aggregates[metric],
                baseline_mean: b.iter().sum::<f64>() / b.len() as f64,
                t: t.t,
                p: t.p,
                df: t.df,
            });
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct EvaluateSettings {
    ks: Vec<usize>,
    ns: Vec<usize>,
}

pub fn evaluate(ctx: &Ctx, a: EvaluateArgs) -> anyhow::Result<Recorder> {
    let ks =
        a.ks.clone()
            .or(ctx.file.eval.ks.clone())
            .unwrap_or(DEFAULT_KS.to_vec());
    let ns =
        a.ns.clone()
            .or(ctx.file.eval.ns.clone())
            .unwrap_or(DEFAULT_NS.to_vec());
    for &k in ks.iter().chain(&ns) {
        check_positive("cutoff", k)?;
    }
    let dataset = load_open(&a.dataset)?;
    let mut r = Recorder::new(
        "evaluate",
        EvaluateSettings {
            ks: ks.clone(),
            ns: ns.clone(),
        },
    );
    r.input(&a.dataset);

    let retrieval = match &a.run {
        Some(run) => {
            let passages = a.passages.as_ref().context("--run needs --passages")?;
            let store = PassageStore::load(passages)?;
            let rankings: HashMap<_, _> = read_run(run)?.into_iter().collect();
            r.input(run);
            r.input(passages);
            Some(evaluate_rankings(&dataset, &rankings, &ks, &store)?)
        }
        None => None,
    };
    let answers = match &a.answers {
        Some(path) => {
            let mut records: Vec<AnswerRecord> = jsonl::read(path)?;
            records.sort_by(|x, y| x.question_id.cmp(&y.question_id).then(x.rank.cmp(&y.rank)));
            let mut grouped: HashMap<String, Vec<String>> = HashMap::new();
            for rec in records {
                grouped.entry(rec.question_id).or_default().push(rec.answer);
            }
            r.input(path);
            Some(evaluate_answers(&dataset, &grouped, &ns)?)
        }
        None => None,
    };

    let mut report = Report {
        queries: dataset.len(),
        retrieval,
        answers,
        comparisons: Vec::new(),
    };
    if let Some(base_path) = &a.compare {
        let text = std::fs::read_to_string(base_path)
            .with_context(|| format!("reading {}", base_path.display()))?;
        let baseline: Report = serde_json::from_str(&text)
            .with_context(|| format!("parsing report {}", base_path.display()))?;
        report.comparisons = compare(&report, &baseline)?;
        r.input(base_path);
    }

    let mut json = serde_json::to_string_pretty(&report).expect("reports serialize");
    json.push('\n');
    std::fs::write(&a.out, json).with_context(|| format!("writing {}", a.out.display()))?;
    r.output(&a.out);

    let merged = report.merged();
    let mut table = render_table(&[(a.label.as_str(), &merged)]);
    for c in &report.comparisons {
        table.push_str(&format!(
            "{}: {:.4} vs {:.4}, t = {:.3}, p = {:.4} (df {})\n",
            c.metric, c.mean, c.baseline_mean, c.t, c.p, c.df
        ));
    }
    match &a.table {
        Some(p) => {
            std::fs::write(p, &table).with_context(|| format!("writing {}", p.display()))?;
            r.output(p);
        }
        None => print!("{table}"),
    }
    Ok(r)
}

//! Datasets, answer and retrieval metrics, reports and significance testing.

pub mod dataset;
pub mod metrics;
pub mod report;
pub mod stats;

pub use dataset::{dedup_open, MrcAnswer, MrcExample, OpenQAExample};
pub use metrics::{em, match_at_k, normalize_answer, token_f1, top_n_f1};
pub use report::{evaluate_answers, evaluate_rankings, evaluate_retrieval, EvalReport};
pub use stats::{paired_t_test, TTest};

//! Labeled queries, dataset splits and Recall/NDCG evaluation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::ArticleId;
use crate::error::{Error, Result};

mod dataset;
mod metrics;

pub use dataset::{
    load_queries, parse_queries, split_dataset, DialogueMode, LabeledQuery, LoadedQueries,
    QueryText, Split, SplitRatios, Splits,
};
pub use metrics::{ndcg_at_k, recall_at_k};

pub const DEFAULT_KS: [usize; 3] = [1, 3, 5];

/// Anything that maps a labeled query to a ranked article list.
pub trait Retriever: Sync {
    /// Returns at least `k` ids when the corpus allows it, plus warnings.
    fn retrieve(&self, query: &LabeledQuery, k: usize) -> Result<(Vec<ArticleId>, Vec<String>)>;
}

impl<F> Retriever for F
where
    F: Fn(&LabeledQuery, usize) -> Result<(Vec<ArticleId>, Vec<String>)> + Sync,
{
    fn retrieve(&self, query: &LabeledQuery, k: usize) -> Result<(Vec<ArticleId>, Vec<String>)> {
        self(query, k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEval {
    pub query_id: String,
    pub gold_ids: Vec<ArticleId>,
    pub ranked: Vec<ArticleId>,
    /// Keyed by `K`, in `[0, 1]`.
    pub recall: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub query_count: usize,
    pub ks: Vec<usize>,
    /// Macro averages as percentages rounded to two decimals.
    pub recall: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
    pub failed_queries: usize,
    pub per_query: Vec<QueryEval>,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Runs `retriever` over `queries` (in parallel) and macro-averages
/// Recall@K and NDCG@K. A query whose retrieval fails scores 0 and is flagged.
pub fn evaluate(
    label: &str,
    retriever: &dyn Retriever,
    queries: &[LabeledQuery],
    ks: &[usize],
) -> Result<EvalReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Config("evaluation K values must be >= 1".into()));
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let max_k = *ks.last().expect("non-empty");

    let mut per_query = queries
        .par_iter()
        .map(|q| {
            if q.gold_ids.is_empty() {
                return Err(Error::EmptyGold(q.query_id.clone()));
            }
            let mut flags = Vec::new();
            let ranked = match retriever.retrieve(q, max_k) {
                Ok((mut r, warnings)) => {
                    r.truncate(max_k);
                    flags.extend(warnings);
                    if r.is_empty() {
                        flags.push("no results".into());
                    }
                    r
                }
                Err(e) => {
                    flags.push(format!("failed: {e}"));
                    Vec::new()
                }
            };
            let mut recall = BTreeMap::new();
            let mut ndcg = BTreeMap::new();
            for &k in &ks {
                recall.insert(k, recall_at_k(&ranked, &q.gold_ids, k)?);
                ndcg.insert(k, ndcg_at_k(&ranked, &q.gold_ids, k)?);
            }
            Ok(QueryEval {
                query_id: q.query_id.clone(),
                gold_ids: q.gold_ids.iter().cloned().collect(),
                ranked,
                recall,
                ndcg,
                flags,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    per_query.sort_by(|a, b| a.query_id.cmp(&b.query_id));

    let n = per_query.len();
    let mean = |pick: &dyn Fn(&QueryEval) -> f64| {
        if n == 0 {
            0.0
        } else {
            round2(100.0 * per_query.iter().map(pick).sum::<f64>() / n as f64)
        }
    };
    let recall = ks.iter().map(|&k| (k, mean(&|q| q.recall[&k]))).collect();
    let ndcg = ks.iter().map(|&k| (k, mean(&|q| q.ndcg[&k]))).collect();
    let failed_queries = per_query
        .iter()
        .filter(|q| q.flags.iter().any(|f| f.starts_with("failed")))
        .count();
    Ok(EvalReport {
        label: label.to_string(),
        query_count: n,
        ks,
        recall,
        ndcg,
        failed_queries,
        per_query,
    })
}

impl EvalReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<24}", "setting");
        for k in &self.ks {
            let _ = write!(out, " {:>9}", format!("R@{k}"));
        }
        for k in &self.ks {
            let _ = write!(out, " {:>9}", format!("N@{k}"));
        }
        out.push('\n');
        let _ = write!(out, "{:<24}", self.label);
        for k in &self.ks {
            let _ = write!(out, " {:>9.2}", self.recall[k]);
        }
        for k in &self.ks {
            let _ = write!(out, " {:>9.2}", self.ndcg[k]);
        }
        let _ = writeln!(
            out,
            "\nqueries: {}  failed: {}",
            self.query_count, self.failed_queries
        );
        out
    }

    /// One JSON object per query, in query-id order.
    pub fn write_per_query(&self, mut w: impl Write) -> std::io::Result<()> {
        for q in &self.per_query {
            serde_json::to_writer(&mut w, q)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// The summary without per-query rows.
    pub fn summary(&self) -> EvalReport {
        EvalReport {
            per_query: Vec::new(),
            ..self.clone()
        }
    }
}

//! The end-to-end retrieval pipeline shared by the CLI, the HTTP service and
//! the Python bindings.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts::Indexes;
use crate::config::PipelineConfig;
use crate::corpus::ArticleId;
use crate::dense::{dense_search_text, mine_struct_negatives, TrainingTriplet};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, LabeledQuery, Retriever};
use crate::fusion::merge_candidates;
use crate::providers::{Providers, ResponseCache};
use crate::rerank::{rerank, IntentClassifier, IntentLabel, RerankWeights};
use crate::sparse::{irac_expand, sparse_search, ExpandedQuery};
use crate::templates::PromptTemplates;

/// Which retrieval paths feed the candidate pool.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathMode {
    #[default]
    Both,
    SparseOnly,
    DenseOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchOptions {
    pub expand: bool,
    pub rerank: bool,
    pub mode: PathMode,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            expand: true,
            rerank: true,
            mode: PathMode::Both,
        }
    }
}

impl SearchOptions {
    /// Short name used in reports, e.g. `full` or `sparse-only,no-expand`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        match self.mode {
            PathMode::Both => {}
            PathMode::SparseOnly => parts.push("sparse-only"),
            PathMode::DenseOnly => parts.push("dense-only"),
        }
        if !self.expand && self.mode != PathMode::DenseOnly {
            parts.push("no-expand");
        }
        if !self.rerank {
            parts.push("no-rerank");
        }
        if parts.is_empty() {
            "full".into()
        } else {
            parts.join(",")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankBreakdown {
    pub raw: Option<f64>,
    pub s_r: f64,
    pub s_p: f64,
    pub s_i: f64,
    pub intent: IntentLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub rank: usize,
    pub article_id: ArticleId,
    pub law_title: String,
    pub article_number: u32,
    /// Final score: the rerank score, or the fused score without reranking.
    pub score: f64,
    pub fused: f64,
    pub initial_rank: usize,
    pub raw_sparse: Option<f64>,
    pub raw_dense: Option<f64>,
    pub norm_sparse: f64,
    pub norm_dense: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rerank: Option<RerankBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub query: String,
    pub options: SearchOptions,
    pub expanded: ExpandedQuery,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_intent: Option<IntentLabel>,
    pub results: Vec<SearchHit>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningReport {
    pub triplets: Vec<TrainingTriplet>,
    pub hierarchy_negatives: usize,
    pub citation_negatives: usize,
    pub skipped: Vec<String>,
    pub warnings: Vec<String>,
}

/// Candidate intent weights tried by [`Pipeline::tune_intent_weight`].
pub const INTENT_GRID: [f64; 5] = [0.0, 0.05, 0.1, 0.2, 0.3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRow {
    pub weights: RerankWeights,
    pub recall: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    /// The metric cutoff the rows are measured at.
    pub k: usize,
    pub rows: Vec<TuningRow>,
    pub best: RerankWeights,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    indexes: Arc<Indexes>,
    providers: Providers,
    templates: PromptTemplates,
    classifier: IntentClassifier,
    intent_cache: Arc<ResponseCache>,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("articles", &self.indexes.corpus.len())
            .field("providers", &self.providers)
            .finish()
    }
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, indexes: Arc<Indexes>, providers: Providers) -> Result<Self> {
        cfg.validate()?;
        let templates = cfg.templates()?;
        let intent_cache = Arc::new(ResponseCache::in_memory());
        let classifier = IntentClassifier::new(
            providers.chat.clone(),
            templates.clone(),
            intent_cache.clone(),
        );
        Ok(Pipeline {
            cfg,
            indexes,
            providers,
            templates,
            classifier,
            intent_cache,
        })
    }

    /// Builds providers from the config and loads verified artifacts.
    pub fn open(cfg: PipelineConfig) -> Result<Self> {
        let providers = cfg.build_providers()?;
        let indexes = crate::artifacts::load_indexes(&cfg, providers.embed.model_id())?;
        Pipeline::new(cfg, Arc::new(indexes), providers)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn indexes(&self) -> &Indexes {
        &self.indexes
    }

    pub fn providers(&self) -> &Providers {
        &self.providers
    }

    /// Runs the selected subset of the pipeline and returns the top `k`.
    /// `k` beyond the corpus size returns every article; the candidate pool
    /// grows to at least `k`.
    pub fn search(&self, query: &str, k: usize, opts: SearchOptions) -> Result<SearchResponse> {
        if k == 0 {
            return Err(Error::OutOfRange("k must be >= 1".into()));
        }
        let corpus = &self.indexes.corpus;
        let k = k.min(corpus.len().max(1));
        let pool_size = self.cfg.pool_size.max(k);
        let mut warnings = Vec::new();

        let use_sparse = opts.mode != PathMode::DenseOnly;
        let use_dense = opts.mode != PathMode::SparseOnly;
        let expanded = if opts.expand && use_sparse {
            irac_expand(
                query,
                self.providers.chat.as_ref(),
                &self.templates,
                self.cfg.max_keywords,
            )
        } else {
            ExpandedQuery::plain(query)
        };
        warnings.extend(expanded.warnings.iter().cloned());

        let sparse = if use_sparse {
            sparse_search(
                &self.indexes.sparse,
                &expanded,
                self.cfg.sparse_depth.max(pool_size),
            )
        } else {
            Vec::new()
        };
        let mut alpha = match opts.mode {
            PathMode::Both => self.cfg.alpha,
            PathMode::SparseOnly => 1.0,
            PathMode::DenseOnly => 0.0,
        };
        let dense = if use_dense {
            let depth = self.cfg.dense_depth.max(pool_size);
            match dense_search_text(
                &self.indexes.dense,
                self.providers.embed.as_ref(),
                query,
                depth,
            ) {
                Ok(d) => d,
                Err(e @ Error::Provider { .. }) if use_sparse => {
                    warnings.push(format!("dense path unavailable, using sparse only: {e}"));
                    alpha = 1.0;
                    Vec::new()
                }
                Err(e) => return Err(e),
            }
        } else {
            Vec::new()
        };

        let pool = merge_candidates("", &sparse, &dense, alpha, pool_size)?;
        let article = |id: &ArticleId| {
            corpus
                .get(id.as_str())
                .ok_or_else(|| Error::UnknownArticle(id.to_string()))
        };

        let (query_intent, results) = if opts.rerank {
            let out = rerank(
                query,
                &pool,
                corpus,
                self.providers.rerank.as_ref(),
                &self.classifier,
                &self.cfg.weights,
                k,
            )?;
            warnings.extend(out.warnings);
            let by_id: std::collections::HashMap<_, _> =
                pool.candidates.iter().map(|c| (&c.article_id, c)).collect();
            let hits = out
                .results
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let a = article(&r.article_id)?;
                    let c = by_id[&r.article_id];
                    Ok(SearchHit {
                        rank: i + 1,
                        article_id: r.article_id.clone(),
                        law_title: a.law_title.clone(),
                        article_number: a.article_number,
                        score: r.score,
                        fused: c.fused,
                        initial_rank: c.initial_rank,
                        raw_sparse: c.raw_sparse,
                        raw_dense: c.raw_dense,
                        norm_sparse: c.norm_sparse,
                        norm_dense: c.norm_dense,
                        rerank: Some(RerankBreakdown {
                            raw: r.raw_rerank,
                            s_r: r.s_r,
                            s_p: r.s_p,
                            s_i: r.s_i,
                            intent: r.intent,
                        }),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (Some(out.query_intent), hits)
        } else {
            let hits = pool
                .candidates
                .iter()
                .take(k)
                .map(|c| {
                    let a = article(&c.article_id)?;
                    Ok(SearchHit {
                        rank: c.initial_rank,
                        article_id: c.article_id.clone(),
                        law_title: a.law_title.clone(),
                        article_number: a.article_number,
                        score: c.fused,
                        fused: c.fused,
                        initial_rank: c.initial_rank,
                        raw_sparse: c.raw_sparse,
                        raw_dense: c.raw_dense,
                        norm_sparse: c.norm_sparse,
                        norm_dense: c.norm_dense,
                        rerank: None,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (None, hits)
        };
        Ok(SearchResponse {
            query: query.to_string(),
            options: opts,
            expanded,
            query_intent,
            results,
            warnings,
        })
    }

    /// Mines one triplet per `(query, gold article)` pair. Failures are
    /// recorded and skipped; triplets come out in query-id order.
    pub fn mine(&self, queries: &[LabeledQuery]) -> MiningReport {
        let mut sorted: Vec<&LabeledQuery> = queries.iter().collect();
        sorted.sort_by(|a, b| a.query_id.cmp(&b.query_id));
        let idx = &self.indexes;
        let per_query: Vec<_> = sorted
            .par_iter()
            .map(|q| {
                let text = q.query_text(self.cfg.dialogue_mode);
                q.gold_ids
                    .iter()
                    .map(|pos| {
                        if !idx.corpus.contains(pos.as_str()) {
                            return Err(format!(
                                "query {}: positive {pos} not in corpus, skipped",
                                q.query_id
                            ));
                        }
                        mine_struct_negatives(
                            &text,
                            pos,
                            &q.gold_ids,
                            &idx.corpus,
                            &idx.graph,
                            &idx.dense,
                            self.providers.embed.as_ref(),
                            &self.cfg.mining,
                        )
                        .map_err(|e| format!("query {} / {pos}: {e}", q.query_id))
                    })
                    .collect::<Vec<_>>()
            })
            .collect();

        let mut report = MiningReport {
            triplets: Vec::new(),
            hierarchy_negatives: 0,
            citation_negatives: 0,
            skipped: Vec::new(),
            warnings: Vec::new(),
        };
        for outcome in per_query.into_iter().flatten() {
            match outcome {
                Ok(o) => {
                    report.hierarchy_negatives += o.hierarchy_negatives;
                    report.citation_negatives += o.citation_negatives;
                    report.warnings.extend(o.warnings);
                    report.triplets.push(o.triplet);
                }
                Err(msg) => {
                    log::warn!("{msg}");
                    report.skipped.push(msg);
                }
            }
        }
        report
    }

    /// The same pipeline with different rerank weights. Indexes, providers
    /// and the intent label cache are shared.
    pub fn with_weights(&self, weights: RerankWeights) -> Result<Pipeline> {
        let mut cfg = self.cfg.clone();
        cfg.weights = weights;
        cfg.validate()?;
        Ok(Pipeline {
            cfg,
            indexes: self.indexes.clone(),
            providers: self.providers.clone(),
            templates: self.templates.clone(),
            classifier: IntentClassifier::new(
                self.providers.chat.clone(),
                self.templates.clone(),
                self.intent_cache.clone(),
            ),
            intent_cache: self.intent_cache.clone(),
        })
    }

    /// Grid search over the intent weight on `dev`, rescaling the other two
    /// weights to keep their sum. Picks the best Recall at the largest metric
    /// K, then NDCG, then the earlier grid value.
    pub fn tune_intent_weight(&self, dev: &[LabeledQuery], grid: &[f64]) -> Result<TuningReport> {
        if dev.is_empty() {
            return Err(Error::Config("tuning needs at least one dev query".into()));
        }
        if grid.is_empty() {
            return Err(Error::Config("tuning grid is empty".into()));
        }
        let k = *self
            .cfg
            .metric_ks
            .iter()
            .max()
            .expect("validated non-empty");
        let mut rows = Vec::with_capacity(grid.len());
        for &lambda3 in grid {
            let weights = self.cfg.weights.with_intent(lambda3)?;
            let report =
                self.with_weights(weights)?
                    .evaluate("tune", dev, SearchOptions::default())?;
            rows.push(TuningRow {
                weights,
                recall: report.recall[&k],
                ndcg: report.ndcg[&k],
            });
        }
        let best = rows
            .iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| {
                a.recall
                    .total_cmp(&b.recall)
                    .then(a.ndcg.total_cmp(&b.ndcg))
                    .then(j.cmp(i))
            })
            .map(|(_, r)| r.weights)
            .expect("grid non-empty");
        Ok(TuningReport { k, rows, best })
    }

    /// Evaluates `queries` under `opts` at the configured metric Ks.
    pub fn evaluate(
        &self,
        label: &str,
        queries: &[LabeledQuery],
        opts: SearchOptions,
    ) -> Result<EvalReport> {
        let retriever = PipelineRetriever {
            pipeline: self,
            opts,
        };
        evaluate(label, &retriever, queries, &self.cfg.metric_ks)
    }
}

struct PipelineRetriever<'a> {
    pipeline: &'a Pipeline,
    opts: SearchOptions,
}

impl Retriever for PipelineRetriever<'_> {
    fn retrieve(&self, query: &LabeledQuery, k: usize) -> Result<(Vec<ArticleId>, Vec<String>)> {
        let text = query.query_text(self.pipeline.cfg.dialogue_mode);
        let r = self.pipeline.search(&text, k, self.opts)?;
        Ok((
            r.results.into_iter().map(|h| h.article_id).collect(),
            r.warnings,
        ))
    }
}

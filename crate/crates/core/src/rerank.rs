//! Intent-aware reranking of the fused candidate pool.
//!
//! The final score of a candidate is
//! `l1 * s_r + l2 * s_p + l3 * s_i` where `s_r` is the arctan-normalized
//! cross-encoder score, `s_p = (W - rank + 1) / W` rewards a high position in
//! the fused pool of size `W`, and `s_i` is 1 when the LLM assigns the query
//! and the article the same intent label.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ArticleId, Corpus};
use crate::error::{Error, Result};
use crate::fusion::{normalize_score, CandidatePool};
use crate::providers::cache::sha256_hex;
use crate::providers::{CacheKey, ChatProvider, RerankProvider, ResponseCache};
use crate::templates::PromptTemplates;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IntentLabel {
    Definition,
    Applicability,
    Consequence,
    Procedure,
    Others,
}

impl IntentLabel {
    pub const ALL: [IntentLabel; 5] = [
        IntentLabel::Definition,
        IntentLabel::Applicability,
        IntentLabel::Consequence,
        IntentLabel::Procedure,
        IntentLabel::Others,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IntentLabel::Definition => "Definition",
            IntentLabel::Applicability => "Applicability",
            IntentLabel::Consequence => "Consequence",
            IntentLabel::Procedure => "Procedure",
            IntentLabel::Others => "Others",
        }
    }
}

impl fmt::Display for IntentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IntentLabel {
    type Err = ();

    /// Exact label name after trimming.
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        let s = s.trim();
        IntentLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextKind {
    Query,
    Article,
}

/// Few-shot LLM intent classifier with a label cache keyed by
/// `(kind, template hash, model, text hash)`.
pub struct IntentClassifier {
    llm: Arc<dyn ChatProvider>,
    templates: PromptTemplates,
    cache: Arc<ResponseCache>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classified {
    pub label: IntentLabel,
    pub warning: Option<String>,
}

impl IntentClassifier {
    pub fn new(
        llm: Arc<dyn ChatProvider>,
        templates: PromptTemplates,
        cache: Arc<ResponseCache>,
    ) -> Self {
        IntentClassifier {
            llm,
            templates,
            cache,
        }
    }

    fn key(&self, text: &str, kind: TextKind) -> CacheKey {
        let (name, template) = match kind {
            TextKind::Query => ("intent-query", &self.templates.query_intent),
            TextKind::Article => ("intent-article", &self.templates.article_intent),
        };
        CacheKey::new(
            name,
            self.llm.model_id(),
            Some(template.hash()),
            &sha256_hex(text),
        )
    }

    /// Never fails: provider errors and unknown labels become `Others` with a
    /// warning, and are not cached.
    pub fn classify(&self, text: &str, kind: TextKind) -> Classified {
        let key = self.key(text, kind);
        if let Some(label) = self.cache.get(&key).and_then(|v| v.parse().ok()) {
            return Classified {
                label,
                warning: None,
            };
        }
        let template = match kind {
            TextKind::Query => &self.templates.query_intent,
            TextKind::Article => &self.templates.article_intent,
        };
        match self.llm.chat(&template.render(text)) {
            Ok(out) => match out.parse::<IntentLabel>() {
                Ok(label) => {
                    if let Err(e) = self.cache.put(&key, label.as_str().to_string()) {
                        log::warn!("intent cache write failed: {e}");
                    }
                    Classified {
                        label,
                        warning: None,
                    }
                }
                Err(()) => Classified {
                    label: IntentLabel::Others,
                    warning: Some(format!("unparseable intent label {:?}", out.trim())),
                },
            },
            Err(e) => Classified {
                label: IntentLabel::Others,
                warning: Some(format!("intent classification failed: {e}")),
            },
        }
    }

    /// Classifies texts concurrently; output aligned with input.
    pub fn classify_many(&self, texts: &[&str], kind: TextKind) -> Vec<Classified> {
        texts.par_iter().map(|t| self.classify(t, kind)).collect()
    }
}

pub fn intent_consistency(query: IntentLabel, article: IntentLabel) -> f64 {
    if query == article {
        1.0
    } else {
        0.0
    }
}

/// `(W - rank + 1) / W` for a 1-based rank.
pub fn prior_score(initial_rank: usize, pool_size: usize) -> Result<f64> {
    if initial_rank < 1 || initial_rank > pool_size {
        return Err(Error::OutOfRange(format!(
            "rank {initial_rank} not in 1..={pool_size}"
        )));
    }
    Ok((pool_size - initial_rank + 1) as f64 / pool_size as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerankWeights {
    pub reranker: f64,
    pub prior: f64,
    pub intent: f64,
}

impl Default for RerankWeights {
    fn default() -> Self {
        RerankWeights {
            reranker: 0.6,
            prior: 0.2,
            intent: 0.2,
        }
    }
}

impl RerankWeights {
    pub fn new(reranker: f64, prior: f64, intent: f64) -> Result<Self> {
        let w = RerankWeights {
            reranker,
            prior,
            intent,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.reranker),
            ("lambda2", self.prior),
            ("lambda3", self.intent),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.reranker + self.prior + self.intent <= 0.0 {
            return Err(Error::Config(
                "lambda1 + lambda2 + lambda3 must be > 0".into(),
            ));
        }
        Ok(())
    }

    /// Replaces the intent weight and rescales the other two so the total is
    /// unchanged.
    pub fn with_intent(&self, intent: f64) -> Result<Self> {
        let total = self.reranker + self.prior + self.intent;
        let rest = self.reranker + self.prior;
        if rest <= 0.0 {
            return RerankWeights::new(0.0, 0.0, intent);
        }
        let scale = (total - intent) / rest;
        RerankWeights::new(self.reranker * scale, self.prior * scale, intent)
    }
}

/// One pool entry with its resolved reranking inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankInput {
    pub article_id: ArticleId,
    pub initial_rank: usize,
    pub fused: f64,
    /// `None` when the cross-encoder failed for this candidate.
    pub raw_rerank: Option<f64>,
    pub intent: IntentLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankedCandidate {
    pub article_id: ArticleId,
    pub initial_rank: usize,
    pub fused: f64,
    pub raw_rerank: Option<f64>,
    pub intent: IntentLabel,
    pub s_r: f64,
    pub s_p: f64,
    pub s_i: f64,
    pub score: f64,
}

/// Scores every input and returns the top `k` by final score, ties broken by
/// the fused rank.
pub fn final_ranking(
    inputs: &[RerankInput],
    query_intent: IntentLabel,
    weights: &RerankWeights,
    pool_size: usize,
    k: usize,
) -> Result<Vec<RerankedCandidate>> {
    weights.validate()?;
    let mut out = inputs
        .iter()
        .map(|c| {
            let s_r = c
                .raw_rerank
                .map(normalize_score)
                .transpose()?
                .unwrap_or(0.0);
            let s_p = prior_score(c.initial_rank, pool_size)?;
            let s_i = intent_consistency(query_intent, c.intent);
            Ok(RerankedCandidate {
                article_id: c.article_id.clone(),
                initial_rank: c.initial_rank,
                fused: c.fused,
                raw_rerank: c.raw_rerank,
                intent: c.intent,
                s_r,
                s_p,
                s_i,
                score: weights.reranker * s_r + weights.prior * s_p + weights.intent * s_i,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.initial_rank.cmp(&b.initial_rank))
    });
    out.truncate(k);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankOutput {
    pub query_intent: IntentLabel,
    pub results: Vec<RerankedCandidate>,
    pub warnings: Vec<String>,
}

/// Resolves cross-encoder scores and intent labels for the pool, then ranks.
/// A cross-encoder failure zeroes `s_r` for the pool; classification failures
/// fall back to `Others`.
pub fn rerank(
    query: &str,
    pool: &CandidatePool,
    corpus: &Corpus,
    cross_encoder: &dyn RerankProvider,
    classifier: &IntentClassifier,
    weights: &RerankWeights,
    k: usize,
) -> Result<RerankOutput> {
    let mut warnings = Vec::new();
    if pool.is_empty() {
        return Ok(RerankOutput {
            query_intent: IntentLabel::Others,
            results: Vec::new(),
            warnings,
        });
    }
    let docs: Vec<&str> = pool
        .candidates
        .iter()
        .map(|c| {
            corpus
                .get(c.article_id.as_str())
                .map(|a| a.content.as_str())
                .ok_or_else(|| Error::UnknownArticle(c.article_id.to_string()))
        })
        .collect::<Result<_>>()?;

    let owned: Vec<String> = docs.iter().map(|d| d.to_string()).collect();
    let raw: Vec<Option<f64>> = match cross_encoder.rerank_scores(query, &owned) {
        Ok(s) if s.len() == docs.len() && s.iter().all(|x| x.is_finite()) => {
            s.into_iter().map(Some).collect()
        }
        Ok(s) => {
            warnings.push(format!(
                "cross-encoder returned {} usable scores for {} documents",
                s.iter().filter(|x| x.is_finite()).count(),
                docs.len()
            ));
            vec![None; docs.len()]
        }
        Err(e) => {
            warnings.push(format!("cross-encoder failed: {e}"));
            vec![None; docs.len()]
        }
    };

    let q = classifier.classify(query, TextKind::Query);
    warnings.extend(q.warning);
    let article_labels = classifier.classify_many(&docs, TextKind::Article);

    let inputs: Vec<RerankInput> = pool
        .candidates
        .iter()
        .zip(raw)
        .zip(article_labels)
        .map(|((c, raw_rerank), label)| {
            if let Some(w) = label.warning {
                warnings.push(format!("{}: {w}", c.article_id));
            }
            RerankInput {
                article_id: c.article_id.clone(),
                initial_rank: c.initial_rank,
                fused: c.fused,
                raw_rerank,
                intent: label.label,
            }
        })
        .collect();
    let results = final_ranking(&inputs, q.label, weights, pool.len(), k)?;
    Ok(RerankOutput {
        query_intent: q.label,
        results,
        warnings,
    })
}

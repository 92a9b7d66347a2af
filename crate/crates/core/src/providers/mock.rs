//! Deterministic in-process providers for offline runs and tests.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{ChatProvider, EmbeddingProvider, RerankProvider};
use crate::error::{Error, Result};
use crate::sparse::tokenize;

/// Chat provider answering from a fixed script: exact prompt matches first,
/// then substring rules in insertion order, then an optional fallback.
/// Anything else is a provider failure.
#[derive(Debug, Clone, Default)]
pub struct ScriptedChat {
    model: String,
    exact: HashMap<String, String>,
    contains: Vec<(String, String)>,
    fallback: Option<String>,
}

impl ScriptedChat {
    pub fn new(model: impl Into<String>) -> Self {
        ScriptedChat {
            model: model.into(),
            ..Default::default()
        }
    }

    pub fn from_map(model: impl Into<String>, map: HashMap<String, String>) -> Self {
        ScriptedChat {
            model: model.into(),
            exact: map,
            ..Default::default()
        }
    }

    pub fn respond(mut self, prompt: impl Into<String>, output: impl Into<String>) -> Self {
        self.exact.insert(prompt.into(), output.into());
        self
    }

    pub fn when_contains(mut self, needle: impl Into<String>, output: impl Into<String>) -> Self {
        self.contains.push((needle.into(), output.into()));
        self
    }

    pub fn fallback(mut self, output: impl Into<String>) -> Self {
        self.fallback = Some(output.into());
        self
    }
}

impl ChatProvider for ScriptedChat {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn chat(&self, prompt: &str) -> Result<String> {
        if let Some(o) = self.exact.get(prompt) {
            return Ok(o.clone());
        }
        if let Some((_, o)) = self
            .contains
            .iter()
            .find(|(n, _)| prompt.contains(n.as_str()))
        {
            return Ok(o.clone());
        }
        self.fallback
            .clone()
            .ok_or_else(|| Error::provider("chat", "no scripted response for prompt"))
    }
}

/// Maps each text to a pseudo-random unit vector seeded by SHA-256 of the text.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    model: String,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        HashEmbedder {
            dim,
            model: format!("hash-embed-{dim}"),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, text: &str) -> Vec<f64> {
        let seed: [u8; 32] = Sha256::digest(text.as_bytes()).into();
        let mut rng = ChaCha8Rng::from_seed(seed);
        let raw: Vec<f64> = (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        raw.into_iter().map(|x| x / norm).collect()
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        if texts.is_empty() {
            return Err(Error::provider("embed", "empty input list"));
        }
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

/// Fixed text-to-vector table with a [`HashEmbedder`] fallback for unknown
/// texts. Table vectors are returned as given.
#[derive(Debug, Clone)]
pub struct CannedEmbedder {
    table: HashMap<String, Vec<f64>>,
    fallback: HashEmbedder,
    model: String,
}

impl CannedEmbedder {
    pub fn new(dim: usize, table: HashMap<String, Vec<f64>>) -> Result<Self> {
        if let Some(v) = table.values().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
        Ok(CannedEmbedder {
            table,
            fallback: HashEmbedder::new(dim),
            model: format!("canned-embed-{dim}"),
        })
    }

    pub fn insert(&mut self, text: impl Into<String>, v: Vec<f64>) {
        self.table.insert(text.into(), v);
    }
}

impl EmbeddingProvider for CannedEmbedder {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        if texts.is_empty() {
            return Err(Error::provider("embed", "empty input list"));
        }
        Ok(texts
            .iter()
            .map(|t| {
                self.table
                    .get(t)
                    .cloned()
                    .unwrap_or_else(|| self.fallback.vector(t))
            })
            .collect())
    }
}

/// Scores a document by the number of distinct query tokens it contains.
#[derive(Debug, Clone, Default)]
pub struct OverlapReranker;

impl RerankProvider for OverlapReranker {
    fn model_id(&self) -> &str {
        "token-overlap"
    }

    fn rerank_scores(&self, query: &str, docs: &[String]) -> Result<Vec<f64>> {
        if docs.is_empty() {
            return Err(Error::provider("rerank", "empty document list"));
        }
        let q: BTreeSet<String> = tokenize(query).into_iter().collect();
        Ok(docs
            .iter()
            .map(|d| {
                let dt: BTreeSet<String> = tokenize(d).into_iter().collect();
                q.intersection(&dt).count() as f64
            })
            .collect())
    }
}

/// Counts calls (and items: prompts, texts or documents) reaching the inner
/// provider.
#[derive(Debug, Default)]
pub struct Counting<P> {
    inner: P,
    calls: AtomicUsize,
    items: AtomicUsize,
}

impl<P> Counting<P> {
    pub fn new(inner: P) -> Self {
        Counting {
            inner,
            calls: AtomicUsize::new(0),
            items: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn items(&self) -> usize {
        self.items.load(Ordering::SeqCst)
    }

    fn record(&self, items: usize) {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.items.fetch_add(items, Ordering::SeqCst);
    }
}

impl<P: ChatProvider> ChatProvider for Counting<P> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn chat(&self, prompt: &str) -> Result<String> {
        self.record(1);
        self.inner.chat(prompt)
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for Counting<P> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        self.record(texts.len());
        self.inner.embed(texts)
    }
}

impl<P: RerankProvider> RerankProvider for Counting<P> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn rerank_scores(&self, query: &str, docs: &[String]) -> Result<Vec<f64>> {
        self.record(docs.len());
        self.inner.rerank_scores(query, docs)
    }
}

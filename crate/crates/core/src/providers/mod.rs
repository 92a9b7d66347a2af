//! Model provider interfaces: chat completion, text embedding and
//! cross-encoder scoring.
//!
//! Three families of implementation live here: [`http::HttpProvider`] speaks the
//! JSON wire protocol in [`wire`], the types in [`mock`] are deterministic
//! in-process stand-ins, and [`cache`] / [`limit`] wrap any provider with a
//! persistent response cache or a concurrency bound.

use std::sync::Arc;

use crate::error::{Error, Result};

pub mod cache;
pub mod http;
pub mod limit;
pub mod mock;
pub mod wire;

pub use cache::{CacheKey, CachedChat, CachedEmbedder, CachedReranker, ResponseCache};
pub use http::{HttpProvider, ProviderConfig, ProviderKind};
pub use limit::{Bounded, Limiter};
pub use mock::{CannedEmbedder, Counting, HashEmbedder, OverlapReranker, ScriptedChat};

pub trait ChatProvider: Send + Sync {
    fn model_id(&self) -> &str;
    fn chat(&self, prompt: &str) -> Result<String>;
}

pub trait EmbeddingProvider: Send + Sync {
    fn model_id(&self) -> &str;
    /// One vector per input text, all of the same dimension.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

pub trait RerankProvider: Send + Sync {
    fn model_id(&self) -> &str;
    /// One raw relevance score per document, aligned with the input order.
    fn rerank_scores(&self, query: &str, docs: &[String]) -> Result<Vec<f64>>;
}

macro_rules! forward_impls {
    ($($ptr:ty),*) => {$(
        impl<T: ChatProvider + ?Sized> ChatProvider for $ptr {
            fn model_id(&self) -> &str { (**self).model_id() }
            fn chat(&self, prompt: &str) -> Result<String> { (**self).chat(prompt) }
        }
        impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for $ptr {
            fn model_id(&self) -> &str { (**self).model_id() }
            fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> { (**self).embed(texts) }
        }
        impl<T: RerankProvider + ?Sized> RerankProvider for $ptr {
            fn model_id(&self) -> &str { (**self).model_id() }
            fn rerank_scores(&self, query: &str, docs: &[String]) -> Result<Vec<f64>> {
                (**self).rerank_scores(query, docs)
            }
        }
    )*};
}

forward_impls!(Arc<T>, Box<T>, &T);

/// Checks arity and that every vector has the same dimension.
pub fn check_embeddings(expected_len: usize, vectors: &[Vec<f64>]) -> Result<()> {
    if vectors.len() != expected_len {
        return Err(Error::provider(
            "embed",
            format!("expected {expected_len} vectors, got {}", vectors.len()),
        ));
    }
    if let Some(first) = vectors.first() {
        if let Some(bad) = vectors.iter().find(|v| v.len() != first.len()) {
            return Err(Error::DimensionMismatch {
                expected: first.len(),
                found: bad.len(),
            });
        }
    }
    Ok(())
}

/// The provider trio a pipeline runs against.
#[derive(Clone)]
pub struct Providers {
    pub chat: Arc<dyn ChatProvider>,
    pub embed: Arc<dyn EmbeddingProvider>,
    pub rerank: Arc<dyn RerankProvider>,
}

impl Providers {
    pub fn new(
        chat: Arc<dyn ChatProvider>,
        embed: Arc<dyn EmbeddingProvider>,
        rerank: Arc<dyn RerankProvider>,
    ) -> Self {
        Providers {
            chat,
            embed,
            rerank,
        }
    }

    /// Wraps each provider with a response cache (shared directory, or
    /// memory-only when `dir` is `None`).
    pub fn cached(self, dir: Option<&std::path::Path>) -> Result<Self> {
        let cache = Arc::new(match dir {
            Some(d) => ResponseCache::on_disk(d)?,
            None => ResponseCache::in_memory(),
        });
        Ok(Providers {
            chat: Arc::new(CachedChat::new(self.chat, cache.clone())),
            embed: Arc::new(CachedEmbedder::new(self.embed, cache.clone())),
            rerank: Arc::new(CachedReranker::new(self.rerank, cache)),
        })
    }
}

impl std::fmt::Debug for Providers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Providers")
            .field("chat", &self.chat.model_id())
            .field("embed", &self.embed.model_id())
            .field("rerank", &self.rerank.model_id())
            .finish()
    }
}

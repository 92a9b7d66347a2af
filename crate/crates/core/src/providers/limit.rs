//! Counting semaphore bounding in-flight provider requests.

use parking_lot::{Condvar, Mutex};

use super::{ChatProvider, EmbeddingProvider, RerankProvider};
use crate::error::Result;

#[derive(Debug)]
pub struct Limiter {
    max: usize,
    in_flight: Mutex<usize>,
    released: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a Limiter,
}

impl Limiter {
    pub fn new(max: usize) -> Self {
        Limiter {
            max: max.max(1),
            in_flight: Mutex::new(0),
            released: Condvar::new(),
        }
    }

    pub fn max(&self) -> usize {
        self.max
    }

    /// Blocks until a slot is free.
    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock();
        while *n >= self.max {
            self.released.wait(&mut n);
        }
        *n += 1;
        Permit { limiter: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.limiter.in_flight.lock() -= 1;
        self.limiter.released.notify_one();
    }
}

/// Any provider behind a [`Limiter`].
pub struct Bounded<P> {
    inner: P,
    limiter: Limiter,
}

impl<P> Bounded<P> {
    pub fn new(inner: P, parallelism: usize) -> Self {
        Bounded {
            inner,
            limiter: Limiter::new(parallelism),
        }
    }
}

impl<P: ChatProvider> ChatProvider for Bounded<P> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn chat(&self, prompt: &str) -> Result<String> {
        let _permit = self.limiter.acquire();
        self.inner.chat(prompt)
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for Bounded<P> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let _permit = self.limiter.acquire();
        self.inner.embed(texts)
    }
}

impl<P: RerankProvider> RerankProvider for Bounded<P> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn rerank_scores(&self, query: &str, docs: &[String]) -> Result<Vec<f64>> {
        let _permit = self.limiter.acquire();
        self.inner.rerank_scores(query, docs)
    }
}

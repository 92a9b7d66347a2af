//! Persistent, exact-key response cache.
//!
//! Entries are immutable once written. On disk each entry is one JSON file
//! named by its key; writes go through a temp file and a hard link so a
//! second writer for the same key never replaces the first.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{check_embeddings, ChatProvider, EmbeddingProvider, RerankProvider};
use crate::error::{Error, Result};

pub fn sha256_hex(data: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(data.as_ref()))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey(String);

impl CacheKey {
    /// Hash of `(kind, model, template hash, input)`.
    pub fn new(kind: &str, model: &str, template_hash: Option<&str>, input: &str) -> Self {
        let mut h = Sha256::new();
        for part in [kind, model, template_hash.unwrap_or(""), input] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        CacheKey(hex::encode(h.finalize()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub value: String,
    pub created_at: u64,
}

#[derive(Debug, Default)]
pub struct ResponseCache {
    dir: Option<PathBuf>,
    entries: RwLock<HashMap<String, CacheEntry>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache::default()
    }

    pub fn on_disk(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(ResponseCache {
            dir: Some(dir.to_path_buf()),
            ..Default::default()
        })
    }

    fn entry_path(&self, key: &CacheKey) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(&key.0[..2]).join(format!("{}.json", key.0)))
    }

    pub fn get(&self, key: &CacheKey) -> Option<String> {
        let found = self.lookup(key);
        match found {
            Some(_) => self.hits.fetch_add(1, Ordering::Relaxed),
            None => self.misses.fetch_add(1, Ordering::Relaxed),
        };
        found
    }

    fn lookup(&self, key: &CacheKey) -> Option<String> {
        if let Some(e) = self.entries.read().get(&key.0) {
            return Some(e.value.clone());
        }
        let path = self.entry_path(key)?;
        let text = std::fs::read_to_string(path).ok()?;
        let entry: CacheEntry = serde_json::from_str(&text).ok()?;
        if entry.key != key.0 {
            return None;
        }
        let value = entry.value.clone();
        self.entries.write().entry(key.0.clone()).or_insert(entry);
        Some(value)
    }

    /// Stores `value` unless the key already has an entry. Returns the value
    /// that is now cached for the key.
    pub fn put(&self, key: &CacheKey, value: String) -> Result<String> {
        let entry = CacheEntry {
            key: key.0.clone(),
            value,
            created_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        if let Some(path) = self.entry_path(key) {
            if !path.exists() {
                write_once(&path, &entry)?;
            }
        }
        let mut entries = self.entries.write();
        let stored = entries.entry(key.0.clone()).or_insert(entry);
        Ok(stored.value.clone())
    }

    pub fn get_or_try_insert(
        &self,
        key: &CacheKey,
        compute: impl FnOnce() -> Result<String>,
    ) -> Result<String> {
        if let Some(v) = self.get(key) {
            return Ok(v);
        }
        let value = compute()?;
        self.put(key, value)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn write_once(path: &Path, entry: &CacheEntry) -> Result<()> {
    let parent = path.parent().expect("entry path has a parent");
    std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let tmp = parent.join(format!(
        ".{}.{}.{:?}.tmp",
        entry.key,
        std::process::id(),
        std::thread::current().id()
    ));
    std::fs::write(&tmp, serde_json::to_vec(entry)?).map_err(|e| Error::io(&tmp, e))?;
    let linked = std::fs::hard_link(&tmp, path);
    let _ = std::fs::remove_file(&tmp);
    match linked {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Ok(()),
        Err(e) => Err(Error::io(path, e)),
    }
}

pub struct CachedChat<P> {
    inner: P,
    cache: Arc<ResponseCache>,
}

impl<P> CachedChat<P> {
    pub fn new(inner: P, cache: Arc<ResponseCache>) -> Self {
        CachedChat { inner, cache }
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }
}

impl<P: ChatProvider> ChatProvider for CachedChat<P> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn chat(&self, prompt: &str) -> Result<String> {
        let key = CacheKey::new("chat", self.inner.model_id(), None, prompt);
        self.cache
            .get_or_try_insert(&key, || self.inner.chat(prompt))
    }
}

/// Caches vectors per text; only uncached texts reach the inner provider.
pub struct CachedEmbedder<P> {
    inner: P,
    cache: Arc<ResponseCache>,
}

impl<P> CachedEmbedder<P> {
    pub fn new(inner: P, cache: Arc<ResponseCache>) -> Self {
        CachedEmbedder { inner, cache }
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedEmbedder<P> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        if texts.is_empty() {
            return Err(Error::provider("embed", "empty input list"));
        }
        let keys: Vec<CacheKey> = texts
            .iter()
            .map(|t| CacheKey::new("embed", self.inner.model_id(), None, &sha256_hex(t)))
            .collect();
        let mut out: Vec<Option<Vec<f64>>> = keys
            .iter()
            .map(|k| {
                self.cache
                    .get(k)
                    .and_then(|v| serde_json::from_str(&v).ok())
            })
            .collect();
        let missing: Vec<usize> = (0..texts.len()).filter(|&i| out[i].is_none()).collect();
        if !missing.is_empty() {
            let batch: Vec<String> = missing.iter().map(|&i| texts[i].clone()).collect();
            let fresh = self.inner.embed(&batch)?;
            check_embeddings(batch.len(), &fresh)?;
            for (&i, v) in missing.iter().zip(fresh) {
                self.cache.put(&keys[i], serde_json::to_string(&v)?)?;
                out[i] = Some(v);
            }
        }
        let vectors: Vec<Vec<f64>> = out.into_iter().map(|v| v.expect("filled above")).collect();
        check_embeddings(texts.len(), &vectors)?;
        Ok(vectors)
    }
}

pub struct CachedReranker<P> {
    inner: P,
    cache: Arc<ResponseCache>,
}

impl<P> CachedReranker<P> {
    pub fn new(inner: P, cache: Arc<ResponseCache>) -> Self {
        CachedReranker { inner, cache }
    }
}

impl<P: RerankProvider> RerankProvider for CachedReranker<P> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn rerank_scores(&self, query: &str, docs: &[String]) -> Result<Vec<f64>> {
        let input = serde_json::to_string(&(query, docs))?;
        let key = CacheKey::new("rerank", self.inner.model_id(), None, &input);
        let raw = self.cache.get_or_try_insert(&key, || {
            let scores = self.inner.rerank_scores(query, docs)?;
            Ok(serde_json::to_string(&scores)?)
        })?;
        Ok(serde_json::from_str(&raw)?)
    }
}

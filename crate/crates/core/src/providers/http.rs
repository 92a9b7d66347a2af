//! Blocking HTTP client for the provider wire protocol.

use std::path::PathBuf;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::limit::Limiter;
use super::wire::{self, ErrorBody};
use super::{check_embeddings, ChatProvider, EmbeddingProvider, RerankProvider};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Chat,
    Embed,
    Rerank,
}

impl ProviderKind {
    fn name(self) -> &'static str {
        match self {
            ProviderKind::Chat => "chat",
            ProviderKind::Embed => "embed",
            ProviderKind::Rerank => "rerank",
        }
    }
}

fn default_timeout() -> f64 {
    30.0
}
fn default_retries() -> u32 {
    2
}
fn default_parallelism() -> usize {
    4
}
fn default_backoff() -> u64 {
    200
}
fn default_batch() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Base URL, e.g. `http://127.0.0.1:8000`.
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

impl ProviderConfig {
    pub fn new(kind: ProviderKind, endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        ProviderConfig {
            kind,
            endpoint: endpoint.into(),
            model: model.into(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            parallelism: default_parallelism(),
            cache_dir: None,
            backoff_ms: default_backoff(),
            batch_size: default_batch(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(Error::Config(format!(
                "timeout_secs must be > 0, got {}",
                self.timeout_secs
            )));
        }
        if self.parallelism < 1 {
            return Err(Error::Config("parallelism must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.endpoint.is_empty() {
            return Err(Error::Config("endpoint must not be empty".into()));
        }
        Ok(())
    }
}

enum Failure {
    Transient(String),
    Fatal(String),
}

pub struct HttpProvider {
    cfg: ProviderConfig,
    agent: ureq::Agent,
    limiter: Limiter,
}

impl std::fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpProvider")
            .field("cfg", &self.cfg)
            .finish()
    }
}

impl HttpProvider {
    pub fn new(cfg: ProviderConfig) -> Result<Self> {
        cfg.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let limiter = Limiter::new(cfg.parallelism);
        Ok(HttpProvider {
            cfg,
            agent,
            limiter,
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.cfg
    }

    fn expect_kind(&self, kind: ProviderKind) -> Result<()> {
        if self.cfg.kind != kind {
            return Err(Error::Config(format!(
                "provider {} is configured as {}, not {}",
                self.cfg.model,
                self.cfg.kind.name(),
                kind.name()
            )));
        }
        Ok(())
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.cfg.endpoint.trim_end_matches('/'), path)
    }

    fn attempt<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        url: &str,
        body: &Req,
    ) -> Result<Resp, Failure> {
        let _permit = self.limiter.acquire();
        let mut resp = self
            .agent
            .post(url)
            .send_json(body)
            .map_err(|e| Failure::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 200 {
            return resp
                .body_mut()
                .read_json::<Resp>()
                .map_err(|e| Failure::Fatal(format!("malformed response body: {e}")));
        }
        let detail = resp
            .body_mut()
            .read_json::<ErrorBody>()
            .map(|b| b.error)
            .unwrap_or_else(|_| "no error body".into());
        let msg = format!("HTTP {status}: {detail}");
        if status == 429 || status >= 500 {
            Err(Failure::Transient(msg))
        } else {
            Err(Failure::Fatal(msg))
        }
    }

    /// POSTs with exponential backoff on transport errors, 429 and 5xx.
    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<Resp> {
        let kind = self.cfg.kind.name();
        let url = self.url(path);
        let mut attempt = 0u32;
        loop {
            match self.attempt(&url, body) {
                Ok(r) => return Ok(r),
                Err(Failure::Fatal(cause)) => return Err(Error::provider(kind, cause)),
                Err(Failure::Transient(cause)) => {
                    if attempt >= self.cfg.max_retries {
                        return Err(Error::provider(
                            kind,
                            format!("{cause} (after {} attempts)", attempt + 1),
                        ));
                    }
                    let delay = self.cfg.backoff_ms.saturating_mul(1u64 << attempt.min(16));
                    log::warn!("{kind} request to {url} failed ({cause}); retrying in {delay} ms");
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
            }
        }
    }
}

impl ChatProvider for HttpProvider {
    fn model_id(&self) -> &str {
        &self.cfg.model
    }

    fn chat(&self, prompt: &str) -> Result<String> {
        self.expect_kind(ProviderKind::Chat)?;
        let req = wire::ChatRequest {
            model: self.cfg.model.clone(),
            prompt: prompt.to_string(),
        };
        let resp: wire::ChatResponse = self.post(wire::CHAT_PATH, &req)?;
        Ok(resp.text)
    }
}

impl EmbeddingProvider for HttpProvider {
    fn model_id(&self) -> &str {
        &self.cfg.model
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        self.expect_kind(ProviderKind::Embed)?;
        if texts.is_empty() {
            return Err(Error::provider("embed", "empty input list"));
        }
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.cfg.batch_size) {
            let req = wire::EmbedRequest {
                model: self.cfg.model.clone(),
                texts: batch.to_vec(),
            };
            let resp: wire::EmbedResponse = self.post(wire::EMBED_PATH, &req)?;
            check_embeddings(batch.len(), &resp.vectors)?;
            out.extend(resp.vectors);
        }
        check_embeddings(texts.len(), &out)?;
        Ok(out)
    }
}

impl RerankProvider for HttpProvider {
    fn model_id(&self) -> &str {
        &self.cfg.model
    }

    fn rerank_scores(&self, query: &str, docs: &[String]) -> Result<Vec<f64>> {
        self.expect_kind(ProviderKind::Rerank)?;
        if docs.is_empty() {
            return Err(Error::provider("rerank", "empty document list"));
        }
        let req = wire::RerankRequest {
            model: self.cfg.model.clone(),
            query: query.to_string(),
            documents: docs.to_vec(),
        };
        let resp: wire::RerankResponse = self.post(wire::RERANK_PATH, &req)?;
        if resp.scores.len() != docs.len() {
            return Err(Error::provider(
                "rerank",
                format!("expected {} scores, got {}", docs.len(), resp.scores.len()),
            ));
        }
        Ok(resp.scores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    /// Serves the given `(status, body)` responses in order, one per
    /// connection, recording request bodies.
    fn serve(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = format!("http://{}", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let seen2 = seen.clone();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0u8; len];
                reader.read_exact(&mut buf).unwrap();
                seen2.lock().unwrap().push(String::from_utf8(buf).unwrap());
                let resp = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(resp.as_bytes()).unwrap();
            }
        });
        (addr, seen)
    }

    fn cfg(kind: ProviderKind, endpoint: &str) -> ProviderConfig {
        let mut c = ProviderConfig::new(kind, endpoint, "m");
        c.backoff_ms = 1;
        c
    }

    #[test]
    fn chat_round_trip() {
        let (addr, seen) = serve(vec![(200, r#"{"text":"hi"}"#.into())]);
        let p = HttpProvider::new(cfg(ProviderKind::Chat, &addr)).unwrap();
        assert_eq!(p.chat("hello").unwrap(), "hi");
        let req: wire::ChatRequest = serde_json::from_str(&seen.lock().unwrap()[0]).unwrap();
        assert_eq!(
            req,
            wire::ChatRequest {
                model: "m".into(),
                prompt: "hello".into()
            }
        );
    }

    #[test]
    fn retries_transient_then_succeeds() {
        let (addr, seen) = serve(vec![
            (503, r#"{"error":"busy"}"#.into()),
            (200, r#"{"scores":[0.5,1.5]}"#.into()),
        ]);
        let p = HttpProvider::new(cfg(ProviderKind::Rerank, &addr)).unwrap();
        let s = p.rerank_scores("q", &["a".into(), "b".into()]).unwrap();
        assert_eq!(s, vec![0.5, 1.5]);
        assert_eq!(seen.lock().unwrap().len(), 2);
    }

    #[test]
    fn client_error_is_not_retried() {
        let (addr, _) = serve(vec![(400, r#"{"error":"bad model"}"#.into())]);
        let p = HttpProvider::new(cfg(ProviderKind::Chat, &addr)).unwrap();
        let err = p.chat("x").unwrap_err().to_string();
        assert!(err.contains("bad model"), "{err}");
    }

    #[test]
    fn rerank_length_mismatch_is_error() {
        let (addr, _) = serve(vec![(200, r#"{"scores":[1.0]}"#.into())]);
        let p = HttpProvider::new(cfg(ProviderKind::Rerank, &addr)).unwrap();
        assert!(p.rerank_scores("q", &["a".into(), "b".into()]).is_err());
    }

    #[test]
    fn embed_dimension_inconsistency_is_error() {
        let (addr, _) = serve(vec![(200, r#"{"vectors":[[1.0,0.0],[1.0]]}"#.into())]);
        let p = HttpProvider::new(cfg(ProviderKind::Embed, &addr)).unwrap();
        assert!(matches!(
            p.embed(&["a".into(), "b".into()]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn unreachable_endpoint_without_retries_fails() {
        let mut c = cfg(ProviderKind::Chat, "http://127.0.0.1:1");
        c.max_retries = 0;
        c.timeout_secs = 2.0;
        let p = HttpProvider::new(c).unwrap();
        assert!(matches!(
            p.chat("x"),
            Err(Error::Provider { kind: "chat", .. })
        ));
    }

    #[test]
    fn wrong_kind_and_bad_config_rejected() {
        let p = HttpProvider::new(cfg(ProviderKind::Embed, "http://127.0.0.1:1")).unwrap();
        assert!(matches!(p.chat("x"), Err(Error::Config(_))));
        let mut c = cfg(ProviderKind::Chat, "http://x");
        c.timeout_secs = 0.0;
        assert!(HttpProvider::new(c).is_err());
        let mut c = cfg(ProviderKind::Chat, "http://x");
        c.parallelism = 0;
        assert!(c.validate().is_err());
    }
}

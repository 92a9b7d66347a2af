//! The single JSON configuration document driving index, search, mine, eval
//! and serve.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::citation::CitationPatternSet;
use crate::corpus::HierarchyRuleSet;
use crate::dense::MiningConfig;
use crate::error::{Error, Result};
use crate::eval::{DialogueMode, SplitRatios, DEFAULT_KS};
use crate::fusion::{check_alpha, DEFAULT_ALPHA};
use crate::providers::{
    CachedChat, CachedEmbedder, CachedReranker, CannedEmbedder, ChatProvider, EmbeddingProvider,
    HashEmbedder, HttpProvider, OverlapReranker, ProviderConfig, ProviderKind, Providers,
    RerankProvider, ResponseCache, ScriptedChat,
};
use crate::rerank::RerankWeights;
use crate::sparse::Bm25Params;
use crate::templates::{PromptTemplates, TemplatePaths};

/// One scripted chat answer: an exact prompt or a substring, never both.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    pub output: String,
}

/// Where a provider slot gets its model from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProviderSpec {
    Http(ProviderConfig),
    ScriptedChat {
        #[serde(default = "mock_model")]
        model: String,
        #[serde(default)]
        rules: Vec<MockRule>,
        /// JSON array of rules, appended after the inline ones.
        #[serde(default)]
        rules_file: Option<PathBuf>,
        #[serde(default)]
        fallback: Option<String>,
    },
    HashEmbed {
        dim: usize,
    },
    CannedEmbed {
        dim: usize,
        /// JSON object mapping text to vector; other texts are hash-embedded.
        table_file: PathBuf,
    },
    OverlapRerank,
}

fn mock_model() -> String {
    "scripted".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSpecs {
    pub chat: ProviderSpec,
    pub embed: ProviderSpec,
    pub rerank: ProviderSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    /// Defaults to the bundled Chinese title rules.
    #[serde(default)]
    pub hierarchy_rules: Option<PathBuf>,
    /// `"ascii"` selects the bracketed test syntax; a path loads a pattern file;
    /// unset uses the bundled Chinese patterns.
    #[serde(default)]
    pub citation_patterns: Option<String>,
    #[serde(default)]
    pub prompts: TemplatePaths,
    pub providers: ProviderSpecs,
    #[serde(default = "default_artifacts")]
    pub artifacts_dir: PathBuf,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub weights: RerankWeights,
    #[serde(default = "default_pool")]
    pub pool_size: usize,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_depth")]
    pub sparse_depth: usize,
    #[serde(default = "default_depth")]
    pub dense_depth: usize,
    #[serde(default = "default_keywords")]
    pub max_keywords: usize,
    #[serde(default)]
    pub bm25: Bm25Params,
    #[serde(default)]
    pub mining: MiningConfig,
    #[serde(default = "default_ks")]
    pub metric_ks: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub split_ratios: SplitRatios,
    #[serde(default = "default_true")]
    pub group_aware_split: bool,
    #[serde(default)]
    pub dialogue_mode: DialogueMode,
}

fn default_artifacts() -> PathBuf {
    PathBuf::from("artifacts")
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_pool() -> usize {
    20
}
fn default_top_k() -> usize {
    10
}
fn default_depth() -> usize {
    100
}
fn default_keywords() -> usize {
    10
}
fn default_ks() -> Vec<usize> {
    DEFAULT_KS.to_vec()
}
fn default_true() -> bool {
    true
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

impl PipelineConfig {
    /// A config with defaults everywhere except the corpus and providers.
    pub fn new(corpus: impl Into<PathBuf>, providers: ProviderSpecs) -> Self {
        PipelineConfig {
            corpus: corpus.into(),
            hierarchy_rules: None,
            citation_patterns: None,
            prompts: TemplatePaths::default(),
            providers,
            artifacts_dir: default_artifacts(),
            cache_dir: None,
            alpha: DEFAULT_ALPHA,
            weights: RerankWeights::default(),
            pool_size: default_pool(),
            top_k: default_top_k(),
            sparse_depth: default_depth(),
            dense_depth: default_depth(),
            max_keywords: default_keywords(),
            bm25: Bm25Params::default(),
            mining: MiningConfig::default(),
            metric_ks: default_ks(),
            seed: 0,
            split_ratios: SplitRatios::default(),
            group_aware_split: true,
            dialogue_mode: DialogueMode::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative paths inside it are taken
    /// relative to the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.artifacts_dir);
        for p in [&mut self.hierarchy_rules, &mut self.cache_dir]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        if let Some(c) = &mut self.citation_patterns {
            if c != "ascii" && Path::new(c).is_relative() {
                *c = base.join(&*c).to_string_lossy().into_owned();
            }
        }
        let t = &mut self.prompts;
        for p in [
            &mut t.irac,
            &mut t.keywords,
            &mut t.query_intent,
            &mut t.article_intent,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        for spec in [
            &mut self.providers.chat,
            &mut self.providers.embed,
            &mut self.providers.rerank,
        ] {
            match spec {
                ProviderSpec::ScriptedChat {
                    rules_file: Some(p),
                    ..
                } => fix(p),
                ProviderSpec::CannedEmbed { table_file, .. } => fix(table_file),
                ProviderSpec::Http(c) => {
                    if let Some(p) = &mut c.cache_dir {
                        fix(p)
                    }
                }
                _ => {}
            }
        }
    }

    /// Checks every cross-field invariant; messages name the offending field.
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)
            .map_err(|_| field_err("alpha", format!("must be in [0, 1], got {}", self.alpha)))?;
        self.weights
            .validate()
            .map_err(|e| field_err("weights", e))?;
        if self.top_k < 1 {
            return Err(field_err("top_k", "must be >= 1"));
        }
        if self.pool_size <= self.top_k {
            return Err(field_err(
                "pool_size",
                format!("must exceed top_k ({} <= {})", self.pool_size, self.top_k),
            ));
        }
        for (name, depth) in [
            ("sparse_depth", self.sparse_depth),
            ("dense_depth", self.dense_depth),
        ] {
            if depth < self.pool_size {
                return Err(field_err(
                    name,
                    format!("must be >= pool_size ({depth} < {})", self.pool_size),
                ));
            }
        }
        self.bm25.validate().map_err(|e| field_err("bm25", e))?;
        self.mining.validate().map_err(|e| field_err("mining", e))?;
        if self.metric_ks.is_empty() || self.metric_ks.contains(&0) {
            return Err(field_err(
                "metric_ks",
                "must be a non-empty list of values >= 1",
            ));
        }
        self.split_ratios
            .validate()
            .map_err(|e| field_err("split_ratios", e))?;
        for (slot, kind, spec) in [
            ("providers.chat", ProviderKind::Chat, &self.providers.chat),
            (
                "providers.embed",
                ProviderKind::Embed,
                &self.providers.embed,
            ),
            (
                "providers.rerank",
                ProviderKind::Rerank,
                &self.providers.rerank,
            ),
        ] {
            let ok = match spec {
                ProviderSpec::Http(c) => {
                    c.validate().map_err(|e| field_err(slot, e))?;
                    c.kind == kind
                }
                ProviderSpec::ScriptedChat { rules, .. } => {
                    if let Some(r) = rules
                        .iter()
                        .find(|r| r.prompt.is_some() == r.contains.is_some())
                    {
                        return Err(field_err(
                            slot,
                            format!(
                                "rule for {:?} needs exactly one of prompt / contains",
                                r.output
                            ),
                        ));
                    }
                    kind == ProviderKind::Chat
                }
                ProviderSpec::HashEmbed { dim } | ProviderSpec::CannedEmbed { dim, .. } => {
                    if *dim == 0 {
                        return Err(field_err(slot, "dim must be >= 1"));
                    }
                    kind == ProviderKind::Embed
                }
                ProviderSpec::OverlapRerank => kind == ProviderKind::Rerank,
            };
            if !ok {
                return Err(field_err(slot, "provider type does not match the slot"));
            }
        }
        Ok(())
    }

    pub fn hierarchy_rules(&self) -> Result<HierarchyRuleSet> {
        match &self.hierarchy_rules {
            Some(p) => HierarchyRuleSet::load(p),
            None => Ok(HierarchyRuleSet::default_zh()),
        }
    }

    pub fn citation_patterns(&self) -> Result<CitationPatternSet> {
        match self.citation_patterns.as_deref() {
            None => Ok(CitationPatternSet::default_zh()),
            Some("ascii") => Ok(CitationPatternSet::ascii()),
            Some(p) => CitationPatternSet::load(p),
        }
    }

    pub fn templates(&self) -> Result<PromptTemplates> {
        PromptTemplates::load(&self.prompts)
    }

    /// Instantiates the three providers, wrapped in response caches. An HTTP
    /// provider's own `cache_dir` takes precedence over the global one.
    pub fn build_providers(&self) -> Result<Providers> {
        let raw = self.build_uncached_providers()?;
        let mut caches: HashMap<Option<PathBuf>, Arc<ResponseCache>> = HashMap::new();
        let mut cache_for = |spec: &ProviderSpec| -> Result<Arc<ResponseCache>> {
            let dir = match spec {
                ProviderSpec::Http(ProviderConfig {
                    cache_dir: Some(d), ..
                }) => Some(d.clone()),
                _ => self.cache_dir.clone(),
            };
            if let Some(c) = caches.get(&dir) {
                return Ok(c.clone());
            }
            let cache = Arc::new(match &dir {
                Some(d) => ResponseCache::on_disk(d)?,
                None => ResponseCache::in_memory(),
            });
            caches.insert(dir, cache.clone());
            Ok(cache)
        };
        Ok(Providers::new(
            Arc::new(CachedChat::new(raw.chat, cache_for(&self.providers.chat)?)),
            Arc::new(CachedEmbedder::new(
                raw.embed,
                cache_for(&self.providers.embed)?,
            )),
            Arc::new(CachedReranker::new(
                raw.rerank,
                cache_for(&self.providers.rerank)?,
            )),
        ))
    }

    pub fn build_uncached_providers(&self) -> Result<Providers> {
        Ok(Providers::new(
            build_chat(&self.providers.chat)?,
            build_embed(&self.providers.embed)?,
            build_rerank(&self.providers.rerank)?,
        ))
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn build_chat(spec: &ProviderSpec) -> Result<Arc<dyn ChatProvider>> {
    match spec {
        ProviderSpec::Http(c) => Ok(Arc::new(HttpProvider::new(c.clone())?)),
        ProviderSpec::ScriptedChat {
            model,
            rules,
            rules_file,
            fallback,
        } => {
            let mut all = rules.clone();
            if let Some(p) = rules_file {
                all.extend(read_json::<Vec<MockRule>>(p)?);
            }
            let mut chat = ScriptedChat::new(model.clone());
            for r in all {
                chat = match (r.prompt, r.contains) {
                    (Some(p), None) => chat.respond(p, r.output),
                    (None, Some(c)) => chat.when_contains(c, r.output),
                    _ => {
                        return Err(Error::Config(
                            "mock rule needs exactly one of prompt / contains".into(),
                        ))
                    }
                };
            }
            if let Some(f) = fallback {
                chat = chat.fallback(f.clone());
            }
            Ok(Arc::new(chat))
        }
        _ => Err(Error::Config("providers.chat: not a chat provider".into())),
    }
}

fn build_embed(spec: &ProviderSpec) -> Result<Arc<dyn EmbeddingProvider>> {
    match spec {
        ProviderSpec::Http(c) => Ok(Arc::new(HttpProvider::new(c.clone())?)),
        ProviderSpec::HashEmbed { dim } => Ok(Arc::new(HashEmbedder::new(*dim))),
        ProviderSpec::CannedEmbed { dim, table_file } => {
            let table: HashMap<String, Vec<f64>> = read_json(table_file)?;
            Ok(Arc::new(CannedEmbedder::new(*dim, table)?))
        }
        _ => Err(Error::Config(
            "providers.embed: not an embedding provider".into(),
        )),
    }
}

fn build_rerank(spec: &ProviderSpec) -> Result<Arc<dyn RerankProvider>> {
    match spec {
        ProviderSpec::Http(c) => Ok(Arc::new(HttpProvider::new(c.clone())?)),
        ProviderSpec::OverlapRerank => Ok(Arc::new(OverlapReranker)),
        _ => Err(Error::Config(
            "providers.rerank: not a rerank provider".into(),
        )),
    }
}

//! On-disk index artifacts and their manifest.
//!
//! `index` writes the normalized corpus, the citation graph, the BM25 index and
//! the dense index into the artifacts directory, plus `manifest.json` holding
//! a SHA-256 per file and fingerprints of the inputs they were built from.
//! Loading re-hashes everything and refuses stale or tampered files.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::citation::{build_graph, CitationGraph, GraphStats};
use crate::config::PipelineConfig;
use crate::corpus::Corpus;
use crate::dense::{build_dense_index, DenseIndex};
use crate::error::{Error, Result};
use crate::providers::cache::sha256_hex;
use crate::providers::EmbeddingProvider;
use crate::sparse::{build_sparse_index, SparseIndex};

pub const MANIFEST: &str = "manifest.json";
const CORPUS_FILE: &str = "corpus.json";
const GRAPH_FILE: &str = "citation_graph.jsonl";
const SPARSE_FILE: &str = "sparse_index.json";
const DENSE_FILE: &str = "dense_index.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Hash of the raw corpus file.
    pub corpus_sha256: String,
    /// Hash of everything else the indexes depend on: rules, patterns, BM25
    /// parameters and the embedding model id.
    pub settings_sha256: String,
    pub articles: usize,
    pub graph: GraphStats,
    pub embedding_dim: usize,
    pub artifacts: BTreeMap<String, ArtifactEntry>,
}

/// Everything `search`, `mine`, `eval` and `serve` need at query time.
#[derive(Debug, Clone)]
pub struct Indexes {
    pub corpus: Corpus,
    pub graph: CitationGraph,
    pub sparse: SparseIndex,
    pub dense: DenseIndex,
    pub manifest: Manifest,
}

fn settings_fingerprint(cfg: &PipelineConfig, embed_model: &str) -> Result<String> {
    let file_hash = |p: &Option<PathBuf>| -> Result<Option<String>> {
        p.as_ref()
            .map(|p| fs::read(p).map(sha256_hex).map_err(|e| Error::io(p, e)))
            .transpose()
    };
    let patterns = match cfg.citation_patterns.as_deref() {
        None | Some("ascii") => cfg.citation_patterns.clone(),
        Some(p) => file_hash(&Some(PathBuf::from(p)))?,
    };
    let v = serde_json::json!({
        "hierarchy_rules": file_hash(&cfg.hierarchy_rules)?,
        "citation_patterns": patterns,
        "bm25": cfg.bm25,
        "embed_model": embed_model,
    });
    Ok(sha256_hex(v.to_string()))
}

fn corpus_fingerprint(cfg: &PipelineConfig) -> Result<String> {
    fs::read(&cfg.corpus)
        .map(sha256_hex)
        .map_err(|e| Error::io(&cfg.corpus, e))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<ArtifactEntry> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(ArtifactEntry {
        file: name.to_string(),
        sha256: sha256_hex(bytes),
        bytes: bytes.len() as u64,
    })
}

/// Stage names used in build errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Corpus,
    CitationGraph,
    SparseIndex,
    DenseIndex,
    Write,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Corpus => "corpus",
            Stage::CitationGraph => "citation graph",
            Stage::SparseIndex => "sparse index",
            Stage::DenseIndex => "dense index",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct BuildError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

fn at<T>(stage: Stage, r: Result<T>) -> std::result::Result<T, BuildError> {
    r.map_err(|source| BuildError { stage, source })
}

/// Builds all four artifacts and writes them with a manifest.
pub fn build_indexes(
    cfg: &PipelineConfig,
    embedder: &dyn EmbeddingProvider,
) -> std::result::Result<Indexes, BuildError> {
    let rules = at(Stage::Corpus, cfg.hierarchy_rules())?;
    let corpus = at(Stage::Corpus, Corpus::load(&cfg.corpus, &rules))?;
    let corpus_sha256 = at(Stage::Corpus, corpus_fingerprint(cfg))?;
    let patterns = at(Stage::CitationGraph, cfg.citation_patterns())?;
    let (graph, stats) = build_graph(&corpus, &patterns);
    let sparse = at(Stage::SparseIndex, build_sparse_index(&corpus, cfg.bm25))?;
    let dense = at(Stage::DenseIndex, build_dense_index(&corpus, embedder))?;
    let settings_sha256 = at(Stage::Write, settings_fingerprint(cfg, embedder.model_id()))?;

    let dir = &cfg.artifacts_dir;
    at(
        Stage::Write,
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
    )?;
    let mut graph_bytes = Vec::new();
    at(
        Stage::Write,
        graph
            .write_jsonl(&mut graph_bytes)
            .map_err(|e| Error::io(GRAPH_FILE, e)),
    )?;
    let mut artifacts = BTreeMap::new();
    let files: [(&str, &str, Vec<u8>); 4] = [
        (
            "corpus",
            CORPUS_FILE,
            at(
                Stage::Write,
                serde_json::to_vec(&corpus).map_err(Error::from),
            )?,
        ),
        ("citation_graph", GRAPH_FILE, graph_bytes),
        (
            "sparse_index",
            SPARSE_FILE,
            at(
                Stage::Write,
                serde_json::to_vec(&sparse).map_err(Error::from),
            )?,
        ),
        (
            "dense_index",
            DENSE_FILE,
            at(
                Stage::Write,
                serde_json::to_vec(&dense).map_err(Error::from),
            )?,
        ),
    ];
    for (name, file, bytes) in files {
        artifacts.insert(
            name.to_string(),
            at(Stage::Write, write_file(dir, file, &bytes))?,
        );
    }
    let manifest = Manifest {
        corpus_sha256,
        settings_sha256,
        articles: corpus.len(),
        graph: stats,
        embedding_dim: dense.dim(),
        artifacts,
    };
    let manifest_bytes = at(
        Stage::Write,
        serde_json::to_vec_pretty(&manifest).map_err(Error::from),
    )?;
    at(Stage::Write, write_file(dir, MANIFEST, &manifest_bytes))?;
    Ok(Indexes {
        corpus,
        graph,
        sparse,
        dense,
        manifest,
    })
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Err(Error::MissingArtifact(path));
    }
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn read_verified(dir: &Path, entry: &ArtifactEntry) -> Result<Vec<u8>> {
    let path = dir.join(&entry.file);
    if !path.exists() {
        return Err(Error::MissingArtifact(path));
    }
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if sha256_hex(&bytes) != entry.sha256 {
        return Err(Error::StaleArtifact(format!(
            "{} does not match its manifest hash",
            path.display()
        )));
    }
    Ok(bytes)
}

/// Loads the artifacts, checking file hashes and that the corpus and settings
/// still match what was indexed.
pub fn load_indexes(cfg: &PipelineConfig, embed_model: &str) -> Result<Indexes> {
    let dir = &cfg.artifacts_dir;
    let manifest = read_manifest(dir)?;
    if corpus_fingerprint(cfg)? != manifest.corpus_sha256 {
        return Err(Error::StaleArtifact(format!(
            "{} changed since indexing",
            cfg.corpus.display()
        )));
    }
    if settings_fingerprint(cfg, embed_model)? != manifest.settings_sha256 {
        return Err(Error::StaleArtifact(
            "hierarchy rules, citation patterns, BM25 parameters or embedding model changed since indexing".into(),
        ));
    }
    let entry = |name: &str| {
        manifest
            .artifacts
            .get(name)
            .ok_or_else(|| Error::MissingArtifact(dir.join(name)))
    };
    let corpus: Corpus = serde_json::from_slice(&read_verified(dir, entry("corpus")?)?)?;
    let graph_bytes = read_verified(dir, entry("citation_graph")?)?;
    let graph = CitationGraph::read_jsonl(
        corpus.iter().map(|a| a.id.clone()),
        BufReader::new(graph_bytes.as_slice()),
    )?;
    let sparse: SparseIndex = serde_json::from_slice(&read_verified(dir, entry("sparse_index")?)?)?;
    let dense: DenseIndex = serde_json::from_slice(&read_verified(dir, entry("dense_index")?)?)?;
    Ok(Indexes {
        corpus,
        graph,
        sparse,
        dense,
        manifest,
    })
}

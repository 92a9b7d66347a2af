//! Multi-path legal article retrieval.
//!
//! A query flows through two retrieval paths: BM25 over an LLM-expanded query
//! ([`sparse`]) and exact cosine search over article embeddings ([`dense`]).
//! Raw scores from both are squashed into `(0, 1)` and mixed ([`fusion`]); the
//! fused pool is then reordered using a cross-encoder, the pool order and
//! query/article intent agreement ([`rerank`]). [`dense`] also mines
//! hierarchy- and citation-aware hard negatives for embedding training.

pub mod artifacts;
pub mod citation;
pub mod config;
pub mod corpus;
pub mod dense;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod pipeline;
pub mod providers;
pub mod rerank;
pub mod sparse;
pub mod synthetic;
pub mod templates;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use pipeline::{PathMode, Pipeline, SearchOptions};

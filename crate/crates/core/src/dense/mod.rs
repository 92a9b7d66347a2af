//! Dense path: exact cosine search over unit-normalized article embeddings,
//! plus hierarchy- and citation-aware hard negative mining.

use serde::{Deserialize, Serialize};

use crate::corpus::{ArticleId, Corpus};
use crate::error::{Error, Result};
use crate::providers::EmbeddingProvider;

mod mining;
mod triplets;

pub use mining::{
    is_valid_level, mine_struct_negatives, sample_by_hierarchy, target_levels, HierarchyBuckets,
    MiningConfig, MiningOutcome, SamplingMode, TrainingTriplet,
};
pub use triplets::{export_triplets, import_triplets, write_triplets, TripletRecord};

const EMBED_BATCH: usize = 64;

/// Scales `v` to unit length. Zero and non-finite vectors are rejected.
pub fn unit_normalize(v: &[f64], what: &str) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector(what.to_string()));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseIndex {
    dim: usize,
    ids: Vec<ArticleId>,
    /// Row-major, `ids.len() * dim`.
    vectors: Vec<f64>,
}

impl DenseIndex {
    pub fn new(dim: usize) -> Self {
        DenseIndex {
            dim,
            ids: Vec::new(),
            vectors: Vec::new(),
        }
    }

    pub fn insert(&mut self, id: ArticleId, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        let unit = unit_normalize(v, id.as_str())?;
        self.ids.push(id);
        self.vectors.extend(unit);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[ArticleId] {
        &self.ids
    }

    pub fn vector(&self, id: &str) -> Option<&[f64]> {
        self.ids
            .iter()
            .position(|i| i.as_str() == id)
            .map(|p| &self.vectors[p * self.dim..(p + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ArticleId, &[f64])> {
        self.ids
            .iter()
            .zip(self.vectors.chunks_exact(self.dim.max(1)))
    }
}

fn embed_one(provider: &dyn EmbeddingProvider, id: &ArticleId, text: &str) -> Result<Vec<f64>> {
    let mut v = provider
        .embed(&[text.to_string()])
        .map_err(|e| Error::Embedding {
            id: id.to_string(),
            cause: e.to_string(),
        })?;
    v.pop().ok_or_else(|| Error::Embedding {
        id: id.to_string(),
        cause: "provider returned no vector".into(),
    })
}

/// Embeds every article content. A failed batch is retried one article at a
/// time so the error names the offending article.
pub fn build_dense_index(corpus: &Corpus, provider: &dyn EmbeddingProvider) -> Result<DenseIndex> {
    let mut index: Option<DenseIndex> = None;
    for chunk in corpus.articles().chunks(EMBED_BATCH) {
        let texts: Vec<String> = chunk.iter().map(|a| a.content.clone()).collect();
        let vectors = match provider.embed(&texts) {
            Ok(v) if v.len() == texts.len() => v,
            _ => chunk
                .iter()
                .map(|a| embed_one(provider, &a.id, &a.content))
                .collect::<Result<Vec<_>>>()?,
        };
        for (article, v) in chunk.iter().zip(vectors) {
            let idx = index.get_or_insert_with(|| DenseIndex::new(v.len()));
            idx.insert(article.id.clone(), &v)?;
        }
    }
    Ok(index.unwrap_or_else(|| DenseIndex::new(0)))
}

/// Exhaustive cosine ranking; ties broken by ascending id.
pub fn dense_search(
    index: &DenseIndex,
    query_vec: &[f64],
    depth: usize,
) -> Result<Vec<(ArticleId, f64)>> {
    if index.is_empty() {
        return Ok(Vec::new());
    }
    if query_vec.len() != index.dim {
        return Err(Error::DimensionMismatch {
            expected: index.dim,
            found: query_vec.len(),
        });
    }
    let q = unit_normalize(query_vec, "query")?;
    let mut hits: Vec<(ArticleId, f64)> = index
        .iter()
        .map(|(id, v)| (id.clone(), v.iter().zip(&q).map(|(a, b)| a * b).sum()))
        .collect();
    crate::sparse::sort_ranked(&mut hits);
    hits.truncate(depth);
    Ok(hits)
}

/// Embeds `query` and runs [`dense_search`].
pub fn dense_search_text(
    index: &DenseIndex,
    provider: &dyn EmbeddingProvider,
    query: &str,
    depth: usize,
) -> Result<Vec<(ArticleId, f64)>> {
    let v = provider
        .embed(&[query.to_string()])?
        .pop()
        .ok_or_else(|| Error::provider("embed", "no vector returned for query"))?;
    dense_search(index, &v, depth)
}

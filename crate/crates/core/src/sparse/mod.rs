//! Lexical path: inverted index with BM25 scoring and LLM query expansion.
//!
//! ```text
//! score(q, d) = sum over query tokens t of
//!     idf(t) * tf(t, d) * (k1 + 1) / (tf(t, d) + k1 * (1 - b + b * |d| / avgdl))
//! idf(t)      = ln((N - n(t) + 0.5) / (n(t) + 0.5) + 1)
//! ```
//!
//! Query tokens are summed with multiplicity, so a keyword that repeats an
//! original query term reinforces it.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{ArticleId, Corpus};
use crate::error::{Error, Result};

mod expand;
mod tokenize;

pub use expand::{irac_expand, parse_keywords, ExpandedQuery};
pub use tokenize::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1.is_finite() && self.k1 > 0.0) {
            return Err(Error::Config(format!(
                "bm25.k1 must be > 0, got {}",
                self.k1
            )));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Config(format!(
                "bm25.b must be in [0, 1], got {}",
                self.b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SparseIndexRepr {
    params: Bm25Params,
    doc_ids: Vec<ArticleId>,
    doc_lens: Vec<u32>,
    postings: BTreeMap<String, Vec<Posting>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "SparseIndexRepr", into = "SparseIndexRepr")]
pub struct SparseIndex {
    params: Bm25Params,
    doc_ids: Vec<ArticleId>,
    doc_lens: Vec<u32>,
    postings: BTreeMap<String, Vec<Posting>>,
    avg_len: f64,
    positions: HashMap<ArticleId, u32>,
}

impl From<SparseIndexRepr> for SparseIndex {
    fn from(r: SparseIndexRepr) -> Self {
        SparseIndex::assemble(r.params, r.doc_ids, r.doc_lens, r.postings)
    }
}

impl From<SparseIndex> for SparseIndexRepr {
    fn from(s: SparseIndex) -> Self {
        SparseIndexRepr {
            params: s.params,
            doc_ids: s.doc_ids,
            doc_lens: s.doc_lens,
            postings: s.postings,
        }
    }
}

impl SparseIndex {
    fn assemble(
        params: Bm25Params,
        doc_ids: Vec<ArticleId>,
        doc_lens: Vec<u32>,
        postings: BTreeMap<String, Vec<Posting>>,
    ) -> Self {
        let avg_len = if doc_lens.is_empty() {
            0.0
        } else {
            doc_lens.iter().map(|&l| l as f64).sum::<f64>() / doc_lens.len() as f64
        };
        let positions = doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        SparseIndex {
            params,
            doc_ids,
            doc_lens,
            postings,
            avg_len,
            positions,
        }
    }

    /// Indexes `(id, text)` pairs.
    pub fn from_documents<'a>(
        docs: impl IntoIterator<Item = (&'a ArticleId, &'a str)>,
        params: Bm25Params,
    ) -> Result<Self> {
        params.validate()?;
        let mut doc_ids = Vec::new();
        let mut doc_lens = Vec::new();
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        for (i, (id, text)) in docs.into_iter().enumerate() {
            let tokens = tokenize(text);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push(Posting {
                    doc: i as u32,
                    tf: count,
                });
            }
            doc_ids.push(id.clone());
            doc_lens.push(tokens.len() as u32);
        }
        Ok(Self::assemble(params, doc_ids, doc_lens, postings))
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn doc_len(&self, id: &str) -> Option<u32> {
        self.positions.get(id).map(|&p| self.doc_lens[p as usize])
    }

    /// Number of documents containing `term`.
    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_freq(term) as f64;
        let total = self.doc_count() as f64;
        ((total - n + 0.5) / (n + 0.5) + 1.0).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, len: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let rel_len = if self.avg_len > 0.0 {
            len as f64 / self.avg_len
        } else {
            1.0
        };
        idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * rel_len))
    }

    /// Accumulated scores for every document with at least one query token.
    fn accumulate(&self, query_tokens: &[String]) -> Vec<f64> {
        let mut scores = vec![0.0; self.doc_count()];
        for token in query_tokens {
            let Some(list) = self.postings.get(token) else {
                continue;
            };
            let idf = self.idf(token);
            for p in list {
                scores[p.doc as usize] +=
                    self.term_weight(idf, p.tf, self.doc_lens[p.doc as usize]);
            }
        }
        scores
    }

    pub fn search_tokens(&self, query_tokens: &[String], depth: usize) -> Vec<(ArticleId, f64)> {
        let scores = self.accumulate(query_tokens);
        let mut hits: Vec<(ArticleId, f64)> = scores
            .into_iter()
            .enumerate()
            .filter(|(_, s)| *s > 0.0)
            .map(|(i, s)| (self.doc_ids[i].clone(), s))
            .collect();
        sort_ranked(&mut hits);
        hits.truncate(depth);
        hits
    }
}

/// Sorts by score descending, then article id ascending.
pub(crate) fn sort_ranked(hits: &mut [(ArticleId, f64)]) {
    hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

pub fn build_sparse_index(corpus: &Corpus, params: Bm25Params) -> Result<SparseIndex> {
    SparseIndex::from_documents(corpus.iter().map(|a| (&a.id, a.content.as_str())), params)
}

/// Raw BM25 score of one article.
pub fn bm25_score(index: &SparseIndex, query_tokens: &[String], article_id: &str) -> Result<f64> {
    let pos = *index
        .positions
        .get(article_id)
        .ok_or_else(|| Error::UnknownArticle(article_id.to_string()))?;
    let len = index.doc_lens[pos as usize];
    let mut score = 0.0;
    for token in query_tokens {
        let Some(list) = index.postings.get(token) else {
            continue;
        };
        if let Ok(i) = list.binary_search_by_key(&pos, |p| p.doc) {
            score += index.term_weight(index.idf(token), list[i].tf, len);
        }
    }
    Ok(score)
}

/// Top-`depth` articles for the expanded query text; zero scores omitted.
pub fn sparse_search(
    index: &SparseIndex,
    query: &ExpandedQuery,
    depth: usize,
) -> Vec<(ArticleId, f64)> {
    index.search_tokens(&tokenize(&query.expanded_text), depth)
}

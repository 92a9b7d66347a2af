//! Score normalization and weighted sparse/dense fusion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::ArticleId;
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.4;

/// Maps a raw score into `(0, 1)` via `1/2 + arctan(r)/pi`.
pub fn normalize_score(r: f64) -> Result<f64> {
    if !r.is_finite() {
        return Err(Error::OutOfRange(format!("raw score {r} is not finite")));
    }
    Ok(0.5 + r.atan() / std::f64::consts::PI)
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "alpha must be in [0, 1], got {alpha}"
        )))
    }
}

/// `alpha * sparse + (1 - alpha) * dense`.
pub fn fuse(norm_sparse: f64, norm_dense: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    for (name, v) in [("sparse", norm_sparse), ("dense", norm_dense)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange(format!(
                "normalized {name} score {v} not in [0, 1]"
            )));
        }
    }
    Ok(alpha * norm_sparse + (1.0 - alpha) * norm_dense)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub article_id: ArticleId,
    pub raw_sparse: Option<f64>,
    pub raw_dense: Option<f64>,
    /// 0 when the sparse path did not return the article.
    pub norm_sparse: f64,
    pub norm_dense: f64,
    pub fused: f64,
    /// 1-based position after fusion.
    pub initial_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub query_id: String,
    pub candidates: Vec<ScoredCandidate>,
}

impl CandidatePool {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &ArticleId> {
        self.candidates.iter().map(|c| &c.article_id)
    }
}

/// Unions both result lists, fuses normalized scores (absent path = 0), sorts
/// by fused score with ascending-id tie-break and keeps the top `pool_size`.
pub fn merge_candidates(
    query_id: &str,
    sparse: &[(ArticleId, f64)],
    dense: &[(ArticleId, f64)],
    alpha: f64,
    pool_size: usize,
) -> Result<CandidatePool> {
    check_alpha(alpha)?;
    let mut raw: BTreeMap<&ArticleId, (Option<f64>, Option<f64>)> = BTreeMap::new();
    for (id, s) in sparse {
        raw.entry(id).or_default().0 = Some(*s);
    }
    for (id, s) in dense {
        raw.entry(id).or_default().1 = Some(*s);
    }

    let mut candidates = raw
        .into_iter()
        .map(|(id, (rs, rd))| {
            let ns = rs.map(normalize_score).transpose()?.unwrap_or(0.0);
            let nd = rd.map(normalize_score).transpose()?.unwrap_or(0.0);
            Ok(ScoredCandidate {
                article_id: id.clone(),
                raw_sparse: rs,
                raw_dense: rd,
                norm_sparse: ns,
                norm_dense: nd,
                fused: fuse(ns, nd, alpha)?,
                initial_rank: 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    candidates.sort_by(|a, b| {
        b.fused
            .total_cmp(&a.fused)
            .then_with(|| a.article_id.cmp(&b.article_id))
    });
    candidates.truncate(pool_size);
    for (i, c) in candidates.iter_mut().enumerate() {
        c.initial_rank = i + 1;
    }
    Ok(CandidatePool {
        query_id: query_id.to_string(),
        candidates,
    })
}

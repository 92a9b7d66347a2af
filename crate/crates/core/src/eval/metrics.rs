use std::collections::{BTreeSet, HashSet};

use crate::corpus::ArticleId;
use crate::error::{Error, Result};

fn check(gold: &BTreeSet<ArticleId>, k: usize) -> Result<()> {
    if gold.is_empty() {
        return Err(Error::EmptyGold("<unnamed>".into()));
    }
    if k == 0 {
        return Err(Error::OutOfRange("K must be >= 1".into()));
    }
    Ok(())
}

/// Positions (0-based) within the top `k` holding a gold article, counting
/// each article once.
fn gold_positions<'a>(
    ranked: &'a [ArticleId],
    gold: &'a BTreeSet<ArticleId>,
    k: usize,
) -> impl Iterator<Item = usize> + 'a {
    let mut seen = HashSet::new();
    ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(move |(_, id)| gold.contains(*id) && seen.insert(*id))
        .map(|(i, _)| i)
}

/// `|top-k ∩ gold| / |gold|`.
pub fn recall_at_k(ranked: &[ArticleId], gold: &BTreeSet<ArticleId>, k: usize) -> Result<f64> {
    check(gold, k)?;
    Ok(gold_positions(ranked, gold, k).count() as f64 / gold.len() as f64)
}

/// Binary-relevance NDCG with `log2(i + 1)` discount; the ideal DCG is taken
/// over `min(k, |gold|)` positions.
pub fn ndcg_at_k(ranked: &[ArticleId], gold: &BTreeSet<ArticleId>, k: usize) -> Result<f64> {
    check(gold, k)?;
    let discount = |pos: usize| 1.0 / ((pos + 2) as f64).log2();
    let dcg: f64 = gold_positions(ranked, gold, k).map(discount).sum();
    let idcg: f64 = (0..k.min(gold.len())).map(discount).sum();
    Ok(dcg / idcg)
}
